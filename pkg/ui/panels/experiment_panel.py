# -*- coding: utf-8 -*-
"""实验网格面板

选择清单（或勾选“先生成语料”）、工作目录与配置文件，后台线程依次跑
Native CM / Combined CM × 特征 × 分类器，每完成一个单元就填入表格。
"""

import os
from pathlib import Path

from PyQt5.QtWidgets import (
    QWidget, QVBoxLayout, QHBoxLayout, QLabel, QPushButton,
    QLineEdit, QCheckBox, QGroupBox,
    QTableWidget, QTableWidgetItem, QHeaderView,
    QAbstractItemView, QProgressBar, QFileDialog,
)
from PyQt5.QtGui import QFont, QColor
from PyQt5.QtCore import QThread, pyqtSignal

from core.config_loader import CLASSIFIERS, default_config_path, load_config
from core.errors import SpoofKitError
from core.features import FEATURE_KINDS
from core.pipeline import (ERR, EXPERIMENT_LABELS, EXPERIMENTS, GridCell, run_experiment,
                           write_grid)
from core.protocol import DOMAINS
from core.synthgen import MANIFEST_NAME, build_corpus

_MONO = QFont("Consolas", 9)
_MONO.setStyleHint(QFont.Monospace)

_CLR_ERR = QColor("#fce8e6")


# ════════════════════════════════════════════════════════════
#  实验后台线程
# ════════════════════════════════════════════════════════════
class _ExperimentWorker(QThread):
    cell_done = pyqtSignal(object)       # GridCell
    status    = pyqtSignal(str)
    failed    = pyqtSignal(str)
    done      = pyqtSignal(str)          # 结果 CSV 路径

    def __init__(self, manifest, work_dir, config_path, features, classifiers, synth):
        super().__init__()
        self._manifest = manifest
        self._work_dir = Path(work_dir)
        self._config_path = config_path or None
        self._features = features
        self._classifiers = classifiers
        self._synth = synth
        self._stop = False

    def stop(self):
        self._stop = True

    def run(self):
        try:
            exp = load_config(default_config_path(self._config_path))
            manifest = self._manifest
            if self._synth:
                self.status.emit("生成合成语料中…")
                c = exp.corpus
                build_corpus(c.num_speakers_per_domain, c.utts_per_speaker, c.recipes, exp.seed,
                             self._work_dir / 'corpus', duration_range=c.duration_range)
                manifest = self._work_dir / 'corpus' / MANIFEST_NAME
            self.status.emit("运行实验网格…")
            result = run_experiment(manifest, exp, self._work_dir, self._features,
                                    self._classifiers, on_cell=self.cell_done.emit,
                                    should_stop=lambda: self._stop)
            csv_path = self._work_dir / 'results.csv'
            write_grid(result, csv_path, self._work_dir / 'results.txt')
            self.done.emit(str(csv_path))
        except (SpoofKitError, OSError, ValueError, ImportError) as e:
            self.failed.emit(f"{type(e).__name__}: {e}")


# ════════════════════════════════════════════════════════════
#  主面板
# ════════════════════════════════════════════════════════════
class ExperimentPanel(QWidget):
    def __init__(self, parent=None):
        super().__init__(parent)
        self._worker: _ExperimentWorker | None = None
        self._rows: dict = {}
        self._build_ui()

    def _build_ui(self):
        lay = QVBoxLayout(self)
        lay.setContentsMargins(12, 10, 12, 8)
        lay.setSpacing(6)

        self._manifest = self._path_row(lay, "清单:", "manifest.tsv", self._pick_manifest)
        self._work_dir = self._path_row(lay, "工作目录:", "缓存、模型、分数与结果", self._pick_work_dir)
        self._config = self._path_row(lay, "配置文件:", "留空使用 config/experiment.json (.json/.yaml/.toml)",
                                      self._pick_config)

        box = QGroupBox("网格")
        bl = QHBoxLayout(box)
        self._feat_checks = {}
        for kind in FEATURE_KINDS:
            cb = QCheckBox(kind.upper())
            cb.setChecked(True)
            self._feat_checks[kind] = cb
            bl.addWidget(cb)
        bl.addSpacing(16)
        self._clf_checks = {}
        for clf in CLASSIFIERS:
            cb = QCheckBox(clf)
            cb.setChecked(True)
            self._clf_checks[clf] = cb
            bl.addWidget(cb)
        bl.addSpacing(16)
        self._synth = QCheckBox("先生成语料")
        bl.addWidget(self._synth)
        bl.addStretch()
        lay.addWidget(box)

        btns = QHBoxLayout()
        for text, slot, color in [
            ("开始实验", self._start, "#107c10"),
            ("停止",     self._stop,  "#d83b01"),
        ]:
            b = QPushButton(text)
            b.setFixedHeight(30)
            b.setStyleSheet(
                f"QPushButton{{background:{color};color:#fff;font-weight:bold;"
                f"border-radius:4px;border:none;font-size:12px;}}")
            b.clicked.connect(slot)
            btns.addWidget(b)
            if text == "停止":
                self._stop_btn = b
                b.setEnabled(False)
            else:
                self._start_btn = b
        btns.addStretch()
        lay.addLayout(btns)

        self._progress = QProgressBar()
        self._progress.setFixedHeight(5)
        self._progress.setTextVisible(False)
        self._progress.hide()
        lay.addWidget(self._progress)

        self._status = QLabel("就绪")
        self._status.setStyleSheet("color:#555; font-size:11px;")
        lay.addWidget(self._status)

        self._table = QTableWidget()
        self._table.setFont(_MONO)
        self._table.setEditTriggers(QAbstractItemView.NoEditTriggers)
        self._table.setSelectionBehavior(QAbstractItemView.SelectRows)
        self._table.verticalHeader().setDefaultSectionSize(24)
        lay.addWidget(self._table, stretch=1)

    def _path_row(self, parent, label, hint, slot) -> QLineEdit:
        row = QHBoxLayout()
        lbl = QLabel(label)
        lbl.setFixedWidth(70)
        row.addWidget(lbl)
        edit = QLineEdit()
        edit.setPlaceholderText(hint)
        row.addWidget(edit, stretch=1)
        b = QPushButton("浏览…")
        b.setFixedWidth(70)
        b.clicked.connect(slot)
        row.addWidget(b)
        parent.addLayout(row)
        return edit

    def set_manifest(self, path):
        """预填清单；工作目录留空时默认放在清单旁的 work/"""
        path = Path(path).resolve()
        self._manifest.setText(str(path))
        if not self._work_dir.text().strip():
            self._work_dir.setText(str(path.parent / "work"))

    def _pick_manifest(self):
        path, _ = QFileDialog.getOpenFileName(self, "选择清单", "", "清单 (*.tsv);;所有文件 (*)")
        if path:
            self._manifest.setText(path)

    def _pick_work_dir(self):
        folder = QFileDialog.getExistingDirectory(self, "选择工作目录")
        if folder:
            self._work_dir.setText(folder)

    def _pick_config(self):
        path, _ = QFileDialog.getOpenFileName(
            self, "选择配置", "", "配置 (*.json *.yaml *.yml *.toml);;所有文件 (*)")
        if path:
            self._config.setText(path)

    # ── 运行 ─────────────────────────────────────────────
    def _start(self):
        features = [k for k, cb in self._feat_checks.items() if cb.isChecked()]
        classifiers = [c for c, cb in self._clf_checks.items() if cb.isChecked()]
        manifest = self._manifest.text().strip()
        work_dir = self._work_dir.text().strip()
        if not features or not classifiers:
            self._status.setText("请至少选择一种特征和一种分类器")
            return
        if not work_dir:
            self._status.setText("请先选择工作目录")
            return
        if not self._synth.isChecked() and not os.path.isfile(manifest):
            self._status.setText("清单不存在（或勾选“先生成语料”）")
            return

        cols = ['Exp.', 'Feat.', 'Classifier']
        for domain in DOMAINS:
            cols += [f"{domain} minDCF", f"{domain} EER(%)"]
        self._table.setColumnCount(len(cols))
        self._table.setHorizontalHeaderLabels(cols)
        hdr = self._table.horizontalHeader()
        for c in range(len(cols)):
            hdr.setSectionResizeMode(c, QHeaderView.ResizeToContents)

        # 预先排好行，单元完成后按 key 回填
        self._rows = {}
        keys = [(name, kind, clf) for kind in features for name, _ in EXPERIMENTS
                for clf in classifiers]
        keys.sort(key=lambda k: ([n for n, _ in EXPERIMENTS].index(k[0]),
                                 features.index(k[1]), classifiers.index(k[2])))
        self._table.setRowCount(len(keys))
        for row, (name, kind, clf) in enumerate(keys):
            self._rows[GridCell(name, kind, clf).key] = row
            for c, text in enumerate((EXPERIMENT_LABELS[name], kind.upper(), clf)):
                self._table.setItem(row, c, QTableWidgetItem(text))

        self._progress.setRange(0, len(keys))
        self._progress.setValue(0)
        self._progress.show()
        self._start_btn.setEnabled(False)
        self._stop_btn.setEnabled(True)
        self._worker = _ExperimentWorker(manifest, work_dir, self._config.text().strip(),
                                         features, classifiers, self._synth.isChecked())
        self._worker.cell_done.connect(self._on_cell)
        self._worker.status.connect(self._status.setText)
        self._worker.failed.connect(self._on_failed)
        self._worker.done.connect(self._on_done)
        self._worker.finished.connect(self._on_finished)
        self._worker.start()

    def _stop(self):
        if self._worker:
            self._worker.stop()
            self._status.setText("将在当前特征完成后停止…")

    def _on_cell(self, cell: GridCell):
        row = self._rows.get(cell.key)
        if row is None:
            return
        col = 3
        for domain in DOMAINS:
            rep = cell.reports.get(domain)
            if rep is not None:
                values = (f"{rep.min_dcf:.3f}", f"{100 * rep.eer:.2f}")
            else:
                # 配置的 eval_domains 不含该域时留空
                values = (ERR, ERR) if cell.error else ("-", "-")
            for text in values:
                item = QTableWidgetItem(text)
                if cell.error:
                    item.setBackground(_CLR_ERR)
                    item.setToolTip(cell.error or "")
                self._table.setItem(row, col, item)
                col += 1
        self._progress.setValue(self._progress.value() + 1)
        self._status.setText(f"完成 {self._progress.value()} / {self._progress.maximum()}")

    def _on_failed(self, msg):
        self._status.setText(f"出错: {msg}")

    def _on_done(self, csv_path):
        self._status.setText(f"完成，结果已写入 {csv_path}")

    def _on_finished(self):
        self._progress.hide()
        self._start_btn.setEnabled(True)
        self._stop_btn.setEnabled(False)
