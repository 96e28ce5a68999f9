import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from . import __version__
from .commands import COMMANDS
from .config import settings
from .errors import VortexLabError
from .models import load_run_config
from .storage.run_storage import RunStorage

# 配置日志
logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vortexlab", description="Ginzburg-Landau 涡旋动力学数值实验")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("command", choices=sorted(COMMANDS), help="子命令")
    parser.add_argument("--config", required=True, help="运行配置 JSON 文件")
    parser.add_argument("--out", default=None, help="输出目录（默认取配置的 output 或 <output_root>/<命令>）")
    parser.add_argument("--threads", type=int, default=None, help="工作线程数（默认取 VORTEXLAB_THREADS）")
    parser.add_argument("--log-level", default=None, help="日志级别（默认取 VORTEXLAB_LOG_LEVEL）")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=(args.log_level or settings.log_level).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    threads = args.threads if args.threads is not None else settings.threads

    try:
        config = load_run_config(args.config)
        out_dir = Path(args.out or config.output or Path(settings.output_root) / args.command)
        storage = RunStorage(out_dir, config.config_hash())
        logger.info(f"执行 {args.command}: 配置 {args.config}，输出 {out_dir}，线程 {threads}")
        with storage.lock():
            return COMMANDS[args.command](config, storage, max(1, threads))
    except VortexLabError as e:
        logger.error(f"{type(e).__name__}: {e.message}")
        print(json.dumps(e.to_dict(), ensure_ascii=False, default=str), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
