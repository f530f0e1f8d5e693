#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""SpoofKit 图形界面入口（批处理见 cli.py）

用法:
    python main.py                                   # 主页
    python main.py --panel evaluate scores.tsv       # 直接打开分数评测并导入文件
    python main.py --panel experiment manifest.tsv   # 预填实验网格的清单
"""

import argparse
import sys

from PyQt5.QtCore import Qt
from PyQt5.QtGui import QColor, QFont, QPalette
from PyQt5.QtWidgets import QApplication

PANELS = ('evaluate', 'protocol', 'experiment')

# Fusion 调色板
_PALETTE = {
    QPalette.Window:          "#f0f2f5",
    QPalette.WindowText:      "#1e2433",
    QPalette.Base:            "#ffffff",
    QPalette.AlternateBase:   "#f5f6f8",
    QPalette.Text:            "#1e2433",
    QPalette.Button:          "#e8eaed",
    QPalette.ButtonText:      "#1e2433",
    QPalette.Highlight:       "#0078d4",
    QPalette.HighlightedText: "#ffffff",
    QPalette.ToolTipBase:     "#1e2433",
    QPalette.ToolTipText:     "#ffffff",
}


def parse_args(argv):
    parser = argparse.ArgumentParser(prog='main.py', description="SpoofKit 图形界面")
    parser.add_argument('-v', '--verbose', action='store_true', help="输出调试日志")
    parser.add_argument('--panel', choices=PANELS, default=None, help="启动后直接打开的面板")
    parser.add_argument('file', nargs='?', default=None,
                        help="evaluate: 分数文件；protocol / experiment: 清单")
    # Qt 自己的参数（-style 等）原样留给 QApplication
    args, _unknown = parser.parse_known_args(argv)
    if args.file and args.panel is None:
        parser.error("给出文件时需要同时指定 --panel")
    return args


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    args = parse_args(argv)

    QApplication.setAttribute(Qt.AA_EnableHighDpiScaling, True)
    QApplication.setAttribute(Qt.AA_UseHighDpiPixmaps, True)
    app = QApplication([sys.argv[0]] + argv)
    app.setApplicationName("SpoofKit")
    app.setStyle('Fusion')

    # core 模块的日志与命令行相同：输出到控制台，带 [*] / [WARN] 前缀
    from cli import setup_logging
    setup_logging(args.verbose)

    font = QFont("Microsoft YaHei UI", 11)
    font.setStyleHint(QFont.SansSerif)
    app.setFont(font)
    palette = QPalette()
    for role, color in _PALETTE.items():
        palette.setColor(role, QColor(color))
    app.setPalette(palette)

    from ui.main_window import MainWindow
    window = MainWindow()
    if args.panel:
        panel = window.open_panel(args.panel)
        if args.file and args.panel == 'experiment':
            panel.set_manifest(args.file)
        elif args.file:
            panel.load_file(args.file)
    window.show()
    return app.exec_()


if __name__ == '__main__':
    sys.exit(main())
