"""Mono WAV files, 16-bit PCM or 32-bit IEEE float, read and written bit-exactly.

No resampling, no channel mixing, no compressed formats: anything else
is an error. Writes go through a temp file and an atomic rename so
parallel runs never see partial files.
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

__all__ = ["WavFormatError", "read_wav", "write_wav", "slice_samples"]


class WavFormatError(ValueError):
    pass


def read_wav(path: str) -> tuple[np.ndarray, int]:
    """Return (samples, sample_rate); dtype int16 for PCM, float32 for float WAVs."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: not a RIFF/WAVE file")
    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos : pos + 4]
        (size,) = struct.unpack("<I", data[pos + 4 : pos + 8])
        body = data[pos + 8 : pos + 8 + size]
        if chunk_id == b"fmt ":
            if size < 16:
                raise WavFormatError(f"{path}: truncated fmt chunk")
            fmt = struct.unpack("<HHIIHH", body[:16])
        elif chunk_id == b"data":
            payload = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned
    if fmt is None or payload is None:
        raise WavFormatError(f"{path}: missing fmt or data chunk")
    audio_format, channels, rate, _, _, bits = fmt
    if channels != 1:
        raise WavFormatError(f"{path}: expected mono audio, got {channels} channels")
    if audio_format == 1 and bits == 16:
        samples = np.frombuffer(payload, dtype="<i2").astype(np.int16, copy=True)
    elif audio_format == 3 and bits == 32:
        samples = np.frombuffer(payload, dtype="<f4").astype(np.float32, copy=True)
    else:
        raise WavFormatError(
            f"{path}: unsupported encoding (format {audio_format}, {bits} bits); "
            "use 16-bit PCM or 32-bit float"
        )
    return samples, rate


def write_wav(path: str, samples: np.ndarray, sample_rate: int) -> None:
    """Write mono samples; int16 becomes PCM, float32 becomes IEEE float."""
    samples = np.asarray(samples)
    if samples.ndim != 1:
        raise WavFormatError(f"can only write 1-D sample arrays, got shape {samples.shape}")
    if samples.dtype == np.int16:
        audio_format, bits = 1, 16
        payload = samples.astype("<i2").tobytes()
    elif samples.dtype == np.float32:
        audio_format, bits = 3, 32
        payload = samples.astype("<f4").tobytes()
    else:
        raise WavFormatError(f"unsupported sample dtype {samples.dtype}; use int16 or float32")
    block_align = bits // 8
    header = b"".join(
        [
            b"RIFF",
            struct.pack("<I", 36 + len(payload)),
            b"WAVE",
            b"fmt ",
            struct.pack("<IHHIIHH", 16, audio_format, 1, sample_rate, sample_rate * block_align, block_align, bits),
            b"data",
            struct.pack("<I", len(payload)),
        ]
    )
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(header)
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def slice_samples(samples: np.ndarray, sample_rate: int, start_s: float, duration_s: float) -> np.ndarray:
    """Bit-exact sample slice [round(start*rate), +round(duration*rate))."""
    i0 = round(start_s * sample_rate)
    n = round(duration_s * sample_rate)
    if i0 < 0 or n <= 0:
        raise ValueError(f"bad slice request start={start_s}s duration={duration_s}s")
    if i0 + n > samples.size:
        raise ValueError(
            f"slice [{start_s}, {start_s + duration_s})s runs past the end of a "
            f"{samples.size / sample_rate:.3f}s file"
        )
    return samples[i0 : i0 + n]
