from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # 并行配置
    threads: int = 1                    # 工作线程数（--threads 的后备值）

    # 求解器配置
    solver_rtol: float = 1e-10          # 共轭梯度相对残差容限
    solver_maxiter_factor: int = 50     # 迭代上限 = factor * max(nx, ny)
    compatibility_rtol: float = 1e-6    # ψ₀ 问题相容性缺陷的相对容限

    # 监控配置
    overshoot_warn: float = 0.1         # |u| 超过 1 的报警阈值

    # 应用配置
    app_name: str = "vortexlab"
    output_root: str = "runs"
    log_level: str = "INFO"

    model_config = SettingsConfigDict(env_prefix="VORTEXLAB_", env_file=".env", extra="ignore")


settings = Settings()
