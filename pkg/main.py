"""
confsets 命令行入口

    python main.py solve --X X.csv --y y.csv --lambda 2.2,2.2
    python main.py ellipse --config ellipse.json --output out/ellipse.json
    python main.py serve
"""

import argparse
import sys
from typing import Optional

from rich.traceback import install

from src.utils.config import global_config
from src.utils.logger import get_module_logger

install(extra_lines=3)

logger = get_module_logger("主程序")

CONFIG_SUBCOMMANDS = {
    "ellipse": "Lasso 与最小二乘置信椭圆的标定",
    "shape": "平移椭圆凸包的标定与体积比较",
    "coverage": "给定形状在所有符号向量上的最小覆盖概率",
    "simulate": "经验覆盖率、覆盖曲线与选择频率的模拟实验",
    "consistent": "一致调参下的平行四边形置信集",
    "boundary": "p=2 形状的边界折线",
}


def _add_globals(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON 配置文件")
    parser.add_argument("--seed", type=int, help="覆盖配置文件中的种子")
    parser.add_argument("--threads", type=int, help="工作线程数，默认使用全部逻辑核")
    parser.add_argument("--output", help="输出文件，缺省写到标准输出")
    parser.add_argument("--format", choices=["json", "csv"], default="json")
    parser.add_argument("--record", action="store_true", help="把本次运行写入运行记录库")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="confsets", description="Lasso 估计量的置信集")
    parser.add_argument("--version", action="version", version=f"%(prog)s {global_config.version}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    solve = subparsers.add_parser("solve", help="求解 Lasso 或最小二乘")
    solve.add_argument("--X", required=True, help="设计矩阵 CSV")
    solve.add_argument("--y", required=True, help="响应向量 CSV")
    solve.add_argument("--lambda", dest="lam", help="λ_n，单个值或逗号分隔的 p 个值")
    solve.add_argument("--sigma", type=float, default=1.0)
    solve.add_argument("--ls", action="store_true", help="只求最小二乘解")
    _add_globals(solve)

    for name, help_text in CONFIG_SUBCOMMANDS.items():
        sub = subparsers.add_parser(name, help=help_text)
        if name == "boundary":
            sub.add_argument("--from-report", dest="from_report", help="从 ellipse/shape 报告中读取形状")
        _add_globals(sub)

    serve = subparsers.add_parser("serve", help="启动 HTTP 服务")
    serve.add_argument("--host", default=None)
    serve.add_argument("--port", type=int, default=None)
    return parser


def serve(host: Optional[str] = None, port: Optional[int] = None) -> int:
    from src.modules import confsets_api, system
    from src.utils.database import initialize_database
    from src.utils.server import global_server

    global_server.register_router(system.router, prefix=global_config.api_prefix)
    global_server.register_router(confsets_api.router, prefix=global_config.api_prefix)
    logger.info(f"已包含 API 路由，前缀为：{global_config.api_prefix}")

    logger.info("正在初始化数据库...")
    initialize_database()
    global_server.set_address(host, port)
    global_server.run()
    return 0


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        return serve(args.host, args.port)

    from src.modules.commands import run_command

    return run_command(args)


if __name__ == "__main__":
    sys.exit(main())
