import os
import sys
from pathlib import Path

current_dir = Path(__file__).parent
sys.path.insert(0, str(current_dir))

from vortexlab.main import main

USAGE = "用法: python start.py <fields|simulate|law|compare|critical|convergence> [--config data/xxx.json] [--out 目录] [--threads N]"

if __name__ == "__main__":
    args = sys.argv[1:]
    if not args or args[0] in ("-h", "--help"):
        print(USAGE)
        print("示例配置位于 data/ 目录")
        sys.exit(0)

    # 未指定配置时使用 data/ 下与命令同名的示例
    if "--config" not in args:
        sample = current_dir / "data" / f"{args[0]}.json"
        if not sample.exists():
            print(f"错误: 找不到示例配置 {sample}，请用 --config 指定")
            sys.exit(2)
        args += ["--config", str(sample)]
        print(f"使用示例配置: {sample}")

    os.makedirs(current_dir / "runs", exist_ok=True)
    try:
        code = main(args)
    except KeyboardInterrupt:
        print("\n运行已中断")
        code = 130
    print("完成" if code == 0 else f"结束，退出码 {code}")
    sys.exit(code)
