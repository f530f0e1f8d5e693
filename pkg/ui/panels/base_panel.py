# -*- coding: utf-8 -*-
"""文档面板基类 — 分数文件 / 清单 → 报告

分数文件、清单都是 UTF-8 TSV，动辄上万行，输入输出区用 QPlainTextEdit；
上下两区放在可拖动的分隔条里，支持把文件直接拖进输入区。
"""

import os
from pathlib import Path

from PyQt5.QtCore import Qt
from PyQt5.QtGui import QFont, QKeySequence
from PyQt5.QtWidgets import (
    QFileDialog, QHBoxLayout, QLabel, QMessageBox, QPlainTextEdit, QPushButton,
    QShortcut, QSplitter, QVBoxLayout, QWidget
)

from core.errors import SpoofKitError

_RUN_STYLE = ("QPushButton{background:#0078d4;color:#fff;font-weight:bold;"
              "font-size:13px;border-radius:4px;padding:0 22px}"
              "QPushButton:hover{background:#106ebe}"
              "QPushButton:pressed{background:#005a9e}"
              "QPushButton:disabled{background:#9bbbd8}")


class _DropEdit(QPlainTextEdit):
    """拖入单个文件时交给 on_file 处理，其余情况按普通文本粘贴"""

    def __init__(self, on_file, parent=None):
        super().__init__(parent)
        self._on_file = on_file

    def dragEnterEvent(self, event):
        if event.mimeData().hasUrls():
            event.acceptProposedAction()
        else:
            super().dragEnterEvent(event)

    def dragMoveEvent(self, event):
        if event.mimeData().hasUrls():
            event.acceptProposedAction()
        else:
            super().dragMoveEvent(event)

    def dropEvent(self, event):
        urls = [u for u in event.mimeData().urls() if u.isLocalFile()]
        if len(urls) == 1:
            self._on_file(urls[0].toLocalFile())
            event.acceptProposedAction()
        else:
            super().dropEvent(event)


class BasePanel(QWidget):
    """TSV 文档面板。

    子类设置 INPUT_HINT / IMPORT_FILTER / REPORT_NAME，并实现:
        build_controls(layout)  — 在按钮行上方添加参数控件
        summarize(text)         — 输入区右上角的摘要（默认统计数据行数）
        process(text)           — 返回报告文本；抛 SpoofKitError / ValueError 视为数据错误
    """

    INPUT_HINT = "粘贴或拖入 TSV 文件…"
    IMPORT_FILTER = "TSV 文件 (*.tsv *.txt);;所有文件 (*)"
    REPORT_NAME = "report.txt"

    def __init__(self, parent=None):
        super().__init__(parent)
        self._mono = QFont("Consolas", 10)
        self._mono.setStyleHint(QFont.Monospace)
        self.source_path = None       # 最近一次导入的文件，相对路径据此解析
        self._build_ui()

    # ── 骨架搭建 ────────────────────────────────────────────
    def _build_ui(self):
        root = QVBoxLayout(self)
        root.setContentsMargins(10, 8, 10, 6)
        root.setSpacing(6)

        top = QWidget()
        top_lay = QVBoxLayout(top)
        top_lay.setContentsMargins(0, 0, 0, 0)
        head = QHBoxLayout()
        self._source_label = QLabel("输入（未导入文件）")
        head.addWidget(self._source_label)
        head.addStretch()
        self._summary_label = QLabel("")
        self._summary_label.setStyleSheet("color:#555;")
        head.addWidget(self._summary_label)
        open_btn = QPushButton("导入…")
        open_btn.setFixedWidth(80)
        open_btn.clicked.connect(self._pick_file)
        head.addWidget(open_btn)
        top_lay.addLayout(head)

        self.input_area = _DropEdit(self.load_file)
        self.input_area.setFont(self._mono)
        self.input_area.setLineWrapMode(QPlainTextEdit.NoWrap)
        self.input_area.setPlaceholderText(self.INPUT_HINT)
        self.input_area.textChanged.connect(self._refresh_summary)
        top_lay.addWidget(self.input_area)

        self._ctrl_layout = QVBoxLayout()
        self.build_controls(self._ctrl_layout)
        top_lay.addLayout(self._ctrl_layout)

        actions = QHBoxLayout()
        self._run_btn = QPushButton("▶  执行")
        self._run_btn.setFixedHeight(34)
        self._run_btn.setStyleSheet(_RUN_STYLE)
        self._run_btn.clicked.connect(self.run)
        actions.addWidget(self._run_btn)
        actions.addStretch()
        self._save_btn = QPushButton("保存报告…")
        self._save_btn.setFixedHeight(30)
        self._save_btn.setEnabled(False)
        self._save_btn.clicked.connect(self._save_report)
        actions.addWidget(self._save_btn)
        top_lay.addLayout(actions)

        self.output_area = QPlainTextEdit()
        self.output_area.setFont(self._mono)
        self.output_area.setReadOnly(True)
        self.output_area.setLineWrapMode(QPlainTextEdit.NoWrap)
        self.output_area.setPlaceholderText("报告")

        splitter = QSplitter(Qt.Vertical)
        splitter.addWidget(top)
        splitter.addWidget(self.output_area)
        splitter.setStretchFactor(0, 3)
        splitter.setStretchFactor(1, 2)
        root.addWidget(splitter, stretch=1)

        self._status_label = QLabel("就绪")
        self._status_label.setStyleSheet("color:#666;font-size:11px")
        root.addWidget(self._status_label)

        QShortcut(QKeySequence("Ctrl+Return"), self, self.run)
        QShortcut(QKeySequence("Ctrl+O"), self, self._pick_file)

    # ── 子类接口 ────────────────────────────────────────────
    def build_controls(self, layout):
        """子类重写：向 layout 添加参数控件"""

    def summarize(self, text: str) -> str:
        n = sum(1 for line in text.splitlines() if line.strip() and not line.startswith('#'))
        return f"{n} 行"

    def process(self, text: str) -> str:
        raise NotImplementedError

    # ── 文件 ────────────────────────────────────────────────
    def load_file(self, path):
        path = Path(path)
        try:
            text = path.read_text(encoding='utf-8')
        except (OSError, UnicodeDecodeError) as e:
            QMessageBox.warning(self, "导入失败", f"{path.name}: {e}")
            return
        self.source_path = path
        self.input_area.setPlainText(text)
        self._source_label.setText(f"输入: {path.name}")
        self._status(f"已导入 {path}")

    def _pick_file(self):
        start = str(self.source_path.parent) if self.source_path else ""
        path, _ = QFileDialog.getOpenFileName(self, "导入", start, self.IMPORT_FILTER)
        if path:
            self.load_file(path)

    def _save_report(self):
        text = self.output_area.toPlainText()
        start = str(self.source_path.with_name(self.REPORT_NAME)) if self.source_path else self.REPORT_NAME
        path, _ = QFileDialog.getSaveFileName(self, "保存报告", start,
                                              "文本文件 (*.txt);;所有文件 (*)")
        if not path:
            return
        try:
            with open(path, 'w', encoding='utf-8', newline='\n') as f:
                f.write(text if text.endswith('\n') else text + '\n')
        except OSError as e:
            QMessageBox.warning(self, "保存失败", str(e))
            return
        self._status(f"已保存 {os.path.basename(path)}")

    # ── 执行 ────────────────────────────────────────────────
    def run(self):
        text = self.input_area.toPlainText()
        if not text.strip():
            self._status("请先粘贴、导入或拖入文件")
            return
        try:
            report = self.process(text) or ""
        except (SpoofKitError, ValueError) as e:
            self.output_area.setPlainText(f"[{type(e).__name__}] {e}")
            self._save_btn.setEnabled(False)
            self._status(f"数据错误: {type(e).__name__}")
            return
        except OSError as e:
            self.output_area.setPlainText(f"[{type(e).__name__}] {e}")
            self._save_btn.setEnabled(False)
            self._status("文件读取失败")
            return
        self.output_area.setPlainText(report)
        self._save_btn.setEnabled(bool(report))
        self._status("完成")

    def _refresh_summary(self):
        try:
            self._summary_label.setText(self.summarize(self.input_area.toPlainText()))
        except (SpoofKitError, ValueError):
            self._summary_label.setText("格式有误")

    def _status(self, msg: str):
        self._status_label.setText(msg)
