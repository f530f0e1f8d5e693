# -*- coding: utf-8 -*-
"""协议校验面板 — 粘贴/导入清单，输出各域各集合的统计表与比例警告"""

from core.protocol import parse_manifest, protocol_stats_table, validate_protocol

from .base_panel import BasePanel


class ProtocolPanel(BasePanel):
    INPUT_HINT = "manifest.tsv 内容（含表头）"
    IMPORT_FILTER = "清单 (*.tsv);;所有文件 (*)"
    REPORT_NAME = "protocol_stats.txt"

    def summarize(self, text: str) -> str:
        rows = [line for line in text.splitlines()[1:] if line.strip()]
        return f"{len(rows)} 条语音"

    def process(self, input_text: str) -> str:
        entries = parse_manifest(input_text)
        stats = validate_protocol(entries)
        out = [protocol_stats_table(stats), "", f"{len(entries)} 条语音，说话人无跨集合重叠"]
        if stats.warnings:
            out += ["", "警告:"] + [f"  {w}" for w in stats.warnings]
        return '\n'.join(out)
