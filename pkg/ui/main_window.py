# -*- coding: utf-8 -*-
"""主窗口 — 侧边栏导航 + 首页说明 + 功能面板

布局:
    ┌─────────────┬──────────────────────────────┐
    │  Sidebar     │  Home Page / Feature Panel   │
    │  230px       │  (QStackedWidget)            │
    └─────────────┴──────────────────────────────┘
"""

from PyQt5.QtWidgets import (
    QMainWindow, QWidget, QHBoxLayout, QVBoxLayout,
    QLabel, QPushButton, QStackedWidget, QFrame,
)
from PyQt5.QtGui import QCursor
from PyQt5.QtCore import Qt

from .panels.evaluate_panel   import EvaluatePanel
from .panels.protocol_panel   import ProtocolPanel
from .panels.experiment_panel import ExperimentPanel

# ── 功能注册表 ───────────────────────────────────────────────
# (分类名, 分类色, [(键, 显示名, 简介, Panel类), ...])；键供 main.py --panel 使用
FEATURES = [
    ("评测", "#0078d4", [
        ("evaluate", "分数评测",   "导入分数文件，计算 minDCF / EER，可按攻击分解", EvaluatePanel),
    ]),
    ("数据", "#107c10", [
        ("protocol", "协议校验",   "清单统计表、说话人重叠检查、spoof:bonafide 比例警告", ProtocolPanel),
    ]),
    ("实验", "#ca5010", [
        ("experiment", "实验网格",   "Native CM / Combined CM × MFCC/LFCC/CQCC × GMM/GBDT", ExperimentPanel),
    ]),
]

_NAV_STYLE = """
    QPushButton {{
        text-align:left; padding:0 20px 0 22px;
        border:none; border-radius:6px;
        margin:1px 10px; color:{color};
        background:{background};
        font-size:13px; font-weight:{weight};
    }}
    QPushButton:hover {{ background:{hover}; color:#e0e4ea; }}
"""


def _nav_style(active: bool, bold: bool = False) -> str:
    if active:
        return _NAV_STYLE.format(color="#ffffff", background="#0078d4",
                                 weight="bold", hover="#106ebe")
    return _NAV_STYLE.format(color="#b0b8c4", background="transparent",
                             weight="bold" if bold else "normal",
                             hover="rgba(255,255,255,0.07)")


class MainWindow(QMainWindow):
    def __init__(self):
        super().__init__()
        self._nav_btns = {}           # stack_index → 按钮
        self._panels = {}             # 键 → (stack_index, 面板)
        self._active_idx = None
        self.setWindowTitle("SpoofKit — 语音防伪工具箱")
        self.resize(1200, 742)
        self.setMinimumSize(980, 605)
        self._build_ui()

    def _build_ui(self):
        central = QWidget()
        root = QHBoxLayout(central)
        root.setContentsMargins(0, 0, 0, 0)
        root.setSpacing(0)

        self._stack = QStackedWidget()
        self._stack.setObjectName("contentArea")
        self._stack.setStyleSheet("#contentArea{background:#f0f2f5; border:none;}")
        self._stack.addWidget(self._build_home_page())
        for _cat, _color, items in FEATURES:
            for key, _name, _desc, PanelClass in items:
                panel = PanelClass()
                self._panels[key] = (self._stack.addWidget(panel), panel)

        root.addWidget(self._build_sidebar())
        root.addWidget(self._stack, stretch=1)
        self.setCentralWidget(central)
        self._go(0)

    # ── 侧边栏 ──────────────────────────────────────────────
    def _build_sidebar(self):
        sidebar = QWidget()
        sidebar.setFixedWidth(230)
        sidebar.setStyleSheet(
            "background: qlineargradient(x1:0,y1:0,x2:0,y2:1,"
            "stop:0 #1a1f2e, stop:1 #232939);")
        nl = QVBoxLayout(sidebar)
        nl.setContentsMargins(0, 20, 0, 16)
        nl.setSpacing(0)

        title = QLabel("  SpoofKit")
        title.setStyleSheet("color:#ffffff; font-size:20px; font-weight:bold; "
                            "background:transparent; padding-left:10px;")
        nl.addWidget(title)
        sub = QLabel("    语音防伪工具箱")
        sub.setStyleSheet("color:#707d8f; font-size:12px; background:transparent;")
        nl.addWidget(sub)
        nl.addSpacing(10)
        sep = QFrame()
        sep.setFixedHeight(1)
        sep.setStyleSheet("background:#2e3650; border:none;")
        nl.addWidget(sep)
        nl.addSpacing(10)

        self._add_nav_btn(nl, "  主页", 0, bold=True)
        idx = 1
        for cat_name, _color, items in FEATURES:
            cat = QLabel(f"  {cat_name}")
            cat.setStyleSheet("color:#5c6a7e; font-size:10px; font-weight:bold; "
                              "letter-spacing:3px; padding:16px 20px 6px 16px; "
                              "background:transparent;")
            nl.addWidget(cat)
            for _key, name, _desc, _cls in items:
                self._add_nav_btn(nl, f"  {name}", idx)
                idx += 1
        nl.addStretch()
        return sidebar

    def _add_nav_btn(self, layout, text, idx, bold=False):
        btn = QPushButton(text)
        btn.setFixedHeight(38)
        btn.setCursor(QCursor(Qt.PointingHandCursor))
        btn.setProperty("bold", bold)
        btn.setStyleSheet(_nav_style(False, bold))
        btn.clicked.connect(lambda checked, i=idx: self._go(i))
        layout.addWidget(btn)
        self._nav_btns[idx] = btn

    # ── 首页 ─────────────────────────────────────────────────
    def _build_home_page(self):
        page = QWidget()
        page.setStyleSheet("background:#f0f2f5;")
        cl = QVBoxLayout(page)
        cl.setContentsMargins(36, 32, 36, 32)
        cl.setSpacing(10)

        welcome = QLabel("SpoofKit")
        welcome.setStyleSheet("font-size:28px; font-weight:bold; color:#1e2433;")
        cl.addWidget(welcome)
        hint = QLabel("合成语料 → 特征提取 → GMM / GBDT 反制模型 → minDCF / EER。"
                      "批处理请使用 cli.py。")
        hint.setStyleSheet("font-size:14px; color:#6b7a8d; margin-bottom:8px;")
        cl.addWidget(hint)

        for cat_name, color, items in FEATURES:
            for _key, name, desc, _cls in items:
                card = QLabel(f"<b>{cat_name} · {name}</b><br>"
                              f"<span style='color:#6b7a8d'>{desc}</span>")
                card.setStyleSheet(f"background:#ffffff; border:1px solid #dfe2e8; "
                                   f"border-left:4px solid {color}; border-radius:8px; "
                                   f"padding:12px 16px; font-size:13px;")
                cl.addWidget(card)
        cl.addStretch()
        return page

    # ── 导航 ─────────────────────────────────────────────────
    def _go(self, idx):
        self._stack.setCurrentIndex(idx)
        if self._active_idx is not None:
            prev = self._nav_btns[self._active_idx]
            prev.setStyleSheet(_nav_style(False, bool(prev.property("bold"))))
        self._nav_btns[idx].setStyleSheet(_nav_style(True))
        self._active_idx = idx

    def open_panel(self, key: str):
        """切换到键为 key 的面板并返回它；未知键抛 KeyError"""
        idx, panel = self._panels[key]
        self._go(idx)
        return panel
