# Ginzburg-Landau 涡旋动力学实验室

__version__ = "1.0.0"
