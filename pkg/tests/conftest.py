# -*- coding: utf-8 -*-
"""公共夹具：纯音、临时 WAV、小型合成语料"""

import numpy as np
import pytest

from core.audio_io import AudioClip, write_wav
from core.synthgen import DEFAULT_RECIPES, MANIFEST_NAME, build_corpus


def tone(freq_hz: float, duration_s: float = 0.5, sample_rate_hz: int = 16000,
         amp: float = 0.5, utt_id: str = "tone") -> AudioClip:
    t = np.arange(int(round(duration_s * sample_rate_hz))) / sample_rate_hz
    return AudioClip(amp * np.sin(2.0 * np.pi * freq_hz * t), sample_rate_hz, utt_id)


@pytest.fixture
def make_tone():
    return tone


@pytest.fixture
def wav_file(tmp_path):
    """写出一个 WAV 并返回路径"""
    def _write(clip: AudioClip, name: str = "clip.wav", encoding: str = 'pcm16'):
        path = tmp_path / name
        write_wav(path, clip, encoding)
        return path
    return _write


@pytest.fixture(scope='session')
def small_corpus(tmp_path_factory):
    """每域 4 人 × 2 条，6 种伪造；返回 (清单路径, 条目)"""
    out = tmp_path_factory.mktemp('corpus')
    entries = build_corpus(4, 2, DEFAULT_RECIPES, seed=7, out_dir=out, duration_range=(0.8, 1.0))
    return out / MANIFEST_NAME, entries
