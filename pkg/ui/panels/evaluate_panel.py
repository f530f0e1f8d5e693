# -*- coding: utf-8 -*-
"""分数评测面板 — 粘贴/导入分数文件，计算 minDCF、EER，可按攻击分解"""

from PyQt5.QtWidgets import (
    QHBoxLayout, QLabel, QDoubleSpinBox, QLineEdit, QPushButton, QFileDialog
)

from core.metrics import CostParams, beta, eer_threshold, format_report
from core.pipeline import evaluate_stage, format_breakdown
from core.protocol import load_manifest
from core.score_io import parse_scores

from .base_panel import BasePanel


class EvaluatePanel(BasePanel):
    INPUT_HINT = "每行: utt_id<TAB>score<TAB>bonafide|spoof"
    IMPORT_FILTER = "分数文件 (*.tsv *.txt);;所有文件 (*)"
    REPORT_NAME = "metrics.txt"

    def summarize(self, text: str) -> str:
        labels = [line.rstrip('\r').rsplit('\t', 1)[-1] for line in text.splitlines()
                  if line.strip() and not line.startswith('#')]
        return f"bonafide {labels.count('bonafide')} / spoof {labels.count('spoof')}"

    def build_controls(self, layout):
        row = QHBoxLayout()
        self._c_miss = self._spin(row, "C_miss", 1.0, 0.001, 1000.0)
        self._c_fa = self._spin(row, "C_fa", 10.0, 0.001, 1000.0)
        self._pi = self._spin(row, "π_spf", 0.05, 0.001, 0.999, step=0.01, decimals=3)
        self._beta_label = QLabel("")
        self._beta_label.setStyleSheet("color:#555;")
        row.addWidget(self._beta_label)
        row.addStretch()
        layout.addLayout(row)

        row = QHBoxLayout()
        row.addWidget(QLabel("清单 (可选，用于按攻击分解):"))
        self._manifest = QLineEdit()
        self._manifest.setPlaceholderText("manifest.tsv")
        row.addWidget(self._manifest, stretch=1)
        pick = QPushButton("浏览…")
        pick.setFixedWidth(70)
        pick.clicked.connect(self._pick_manifest)
        row.addWidget(pick)
        layout.addLayout(row)
        self._update_beta()

    def _spin(self, row, label, value, lo, hi, step=1.0, decimals=3):
        row.addWidget(QLabel(f"{label}:"))
        box = QDoubleSpinBox()
        box.setRange(lo, hi)
        box.setDecimals(decimals)
        box.setSingleStep(step)
        box.setValue(value)
        box.valueChanged.connect(self._update_beta)
        row.addWidget(box)
        row.addSpacing(10)
        return box

    def _params(self) -> CostParams:
        return CostParams(self._c_miss.value(), self._c_fa.value(), self._pi.value())

    def _update_beta(self, *_):
        try:
            self._beta_label.setText(f"β = {beta(self._params()):.4g}")
        except ValueError as e:
            self._beta_label.setText(str(e))

    def _pick_manifest(self):
        path, _ = QFileDialog.getOpenFileName(self, "选择清单", "", "清单 (*.tsv);;所有文件 (*)")
        if path:
            self._manifest.setText(path)

    def process(self, input_text: str) -> str:
        scores = parse_scores(input_text)
        attack_of = None
        manifest = self._manifest.text().strip()
        if manifest:
            attack_of = {e.utt_id: e.attack_id for e in load_manifest(manifest)}
        report, breakdown = evaluate_stage(scores, self._params(), attack_of)
        lines = [format_report(report),
                 f"β = {beta(self._params()):.6g}，EER 阈值 ≈ {eer_threshold(scores):.6g}"]
        if breakdown:
            lines += ["", "按攻击分解:", format_breakdown(breakdown)]
        return '\n'.join(lines)
