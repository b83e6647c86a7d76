"""Binary CSI file format and the session-frame stream protocol.

File layout (little-endian):

* magic ``WSCSI001`` (8 bytes ASCII)
* ``n_antennas``, ``n_subcarriers``, ``n_samples`` as u32
* ``carrier_freq_hz``, ``subcarrier_spacing_hz`` as f64
* ``n_samples`` timestamps as f64 seconds
* the complex tensor as interleaved float32 (re, im) pairs, antenna-major,
  subcarrier-middle, time-minor

Stream frames carry one session block each: a 16-byte frame header (magic
``WSFRM001``, window id u32, session id u16, flags u16) followed by a body in
the file format above.  Frames may arrive out of order within a window; a
frame for a later window id closes the window.  Bad frames are dropped and
counted, never aborting the stream.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .core import ConfigError, CsiWindow, Geometry, SystemConfig, median_sample_interval

FILE_MAGIC = b"WSCSI001"
FRAME_MAGIC = b"WSFRM001"
_HEADER = struct.Struct("<8sIIIdd")
_FRAME_HEADER = struct.Struct("<8sIHH")


class FileFormatError(ValueError):
    """Malformed CSI file or frame; ``offset`` is the byte position."""

    def __init__(self, message, offset: int = 0):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class BadMagicError(FileFormatError):
    pass


class SizeMismatchError(FileFormatError):
    def __init__(self, expected_bytes: int, actual_bytes: int, offset: int = 0):
        self.expected_bytes = expected_bytes
        self.actual_bytes = actual_bytes
        super().__init__(
            f"size mismatch: expected {expected_bytes} bytes, got {actual_bytes}",
            offset,
        )


class TimestampOrderError(FileFormatError):
    pass


def _fallback_config(carrier, spacing, n_ant, n_sub, timestamps) -> SystemConfig:
    # placeholder geometry/schedule so a standalone file is loadable;
    # pipelines that care pass their own config
    span = float(timestamps[-1] - timestamps[0])
    return SystemConfig(
        carrier_freq_hz=carrier,
        subcarrier_spacing_hz=spacing,
        num_subcarriers=n_sub,
        num_antennas=n_ant,
        geometry=Geometry(1.0, 1.0, 2.0),
        window_duration_s=span,
        session_duration_s=span,
        gap_duration_s=0.0,
        intra_session_rate_hz=1.0 / median_sample_interval(timestamps),
    )


def csi_to_bytes(window: CsiWindow) -> bytes:
    """Serialize a window in the binary file format."""
    n, m, ell = window.samples.shape
    header = _HEADER.pack(
        FILE_MAGIC, n, m, ell,
        window.config.carrier_freq_hz, window.config.subcarrier_spacing_hz,
    )
    ts = np.asarray(window.timestamps_s, dtype="<f8").tobytes()
    payload = np.ascontiguousarray(window.samples, dtype="<c8").tobytes()
    return header + ts + payload


def csi_from_bytes(data: bytes, config: SystemConfig | None = None, base_offset: int = 0) -> CsiWindow:
    """Deserialize a window; validates magic, sizes, and timestamp order.

    When ``config`` is given, the file's dimensions and frequencies must
    match it; otherwise a minimal config is synthesized from the header.
    """
    if len(data) < _HEADER.size:
        raise SizeMismatchError(_HEADER.size, len(data), base_offset)
    magic, n_ant, n_sub, n_samp, carrier, spacing = _HEADER.unpack_from(data, 0)
    if magic != FILE_MAGIC:
        raise BadMagicError(f"bad magic {magic!r}", base_offset)
    if n_ant == 0 or n_sub == 0 or n_samp == 0:
        raise FileFormatError(
            f"degenerate header: antennas={n_ant} subcarriers={n_sub} samples={n_samp}",
            base_offset,
        )
    expected = _HEADER.size + 8 * n_samp + 8 * n_ant * n_sub * n_samp
    if len(data) != expected:
        raise SizeMismatchError(expected, len(data), base_offset)
    ts_end = _HEADER.size + 8 * n_samp
    timestamps = np.frombuffer(data, dtype="<f8", count=n_samp, offset=_HEADER.size)
    diffs = np.diff(timestamps)
    bad = np.nonzero(diffs <= 0)[0]
    if bad.size:
        raise TimestampOrderError(
            "timestamps not strictly increasing",
            base_offset + _HEADER.size + 8 * int(bad[0] + 1),
        )
    samples = np.frombuffer(data, dtype="<c8", offset=ts_end).reshape(n_ant, n_sub, n_samp)
    if config is not None:
        if (
            config.num_antennas != n_ant
            or config.num_subcarriers != n_sub
            or config.carrier_freq_hz != carrier
            or config.subcarrier_spacing_hz != spacing
        ):
            raise ConfigError(
                "file header does not match the supplied config "
                f"(file: N={n_ant} M={n_sub} fc={carrier} df={spacing})"
            )
    else:
        config = _fallback_config(carrier, spacing, n_ant, n_sub, timestamps)
    return CsiWindow(samples=samples, timestamps_s=timestamps, config=config)


def write_csi_file(window: CsiWindow, path) -> None:
    with open(path, "wb") as fh:
        fh.write(csi_to_bytes(window))


def read_csi_file(path, config: SystemConfig | None = None) -> CsiWindow:
    with open(path, "rb") as fh:
        return csi_from_bytes(fh.read(), config)


@dataclass(frozen=True)
class StreamFrame:
    """One decoded session frame."""

    window_id: int
    session_id: int
    flags: int
    window: CsiWindow


def pack_frame(window_id: int, session_id: int, window: CsiWindow, flags: int = 0) -> bytes:
    header = _FRAME_HEADER.pack(FRAME_MAGIC, window_id, session_id, flags)
    return header + csi_to_bytes(window)


def parse_frame(data: bytes, config: SystemConfig | None = None) -> StreamFrame:
    if len(data) < _FRAME_HEADER.size:
        raise SizeMismatchError(_FRAME_HEADER.size, len(data), 0)
    magic, window_id, session_id, flags = _FRAME_HEADER.unpack_from(data, 0)
    if magic != FRAME_MAGIC:
        raise BadMagicError(f"bad frame magic {magic!r}", 0)
    body = csi_from_bytes(data[_FRAME_HEADER.size:], config, base_offset=_FRAME_HEADER.size)
    return StreamFrame(window_id=window_id, session_id=session_id, flags=flags, window=body)


def split_frames(data: bytes):
    """Iterate raw frames out of a concatenated byte stream.

    Frame bodies are self-delimiting (sizes derive from the body header), so
    a stream dump on disk can be replayed.  A malformed header terminates
    iteration with the remaining bytes surfaced as one undecodable chunk.
    """
    pos = 0
    while pos < len(data):
        rest = len(data) - pos
        if rest < _FRAME_HEADER.size + _HEADER.size:
            yield data[pos:]
            return
        _, n_ant, n_sub, n_samp, _, _ = _HEADER.unpack_from(data, pos + _FRAME_HEADER.size)
        total = _FRAME_HEADER.size + _HEADER.size + 8 * n_samp + 8 * n_ant * n_sub * n_samp
        yield data[pos : pos + total]
        pos += total


class StreamIngestor:
    """Reassembles analysis windows from session frames.

    Sessions of one window may arrive out of order and are merged sorted by
    timestamp; a frame for a later window id closes every earlier window.
    Invalid frames (bad magic/sizes, inconsistent dimensions, overlapping
    timestamps) are dropped and counted in ``dropped``.
    """

    def __init__(self, config: SystemConfig | None = None):
        self.config = config
        self.dropped = 0
        self._current_id: int | None = None
        self._sessions: list[CsiWindow] = []

    def _merge(self) -> CsiWindow | None:
        if not self._sessions:
            return None
        first = self._sessions[0]
        samples = np.concatenate([s.samples for s in self._sessions], axis=2)
        times = np.concatenate([s.timestamps_s for s in self._sessions])
        order = np.argsort(times, kind="stable")
        times = times[order]
        if np.any(np.diff(times) <= 0):
            self.dropped += len(self._sessions)
            return None
        return CsiWindow(
            samples=samples[:, :, order], timestamps_s=times, config=first.config
        )

    def push(self, frame_bytes: bytes) -> list[CsiWindow]:
        """Feed one frame; returns any windows completed by its arrival."""
        try:
            frame = parse_frame(frame_bytes, self.config)
        except (FileFormatError, ConfigError, ValueError):
            self.dropped += 1
            return []
        closed: list[CsiWindow] = []
        if self._current_id is None:
            self._current_id = frame.window_id
        if frame.window_id < self._current_id:
            self.dropped += 1  # stale frame for an already-closed window
            return []
        if frame.window_id > self._current_id:
            merged = self._merge()
            if merged is not None:
                closed.append(merged)
            self._sessions = []
            self._current_id = frame.window_id
        if self._sessions:
            ref = self._sessions[0].config
            cfg = frame.window.config
            if (
                cfg.num_antennas != ref.num_antennas
                or cfg.num_subcarriers != ref.num_subcarriers
                or cfg.carrier_freq_hz != ref.carrier_freq_hz
                or cfg.subcarrier_spacing_hz != ref.subcarrier_spacing_hz
            ):
                self.dropped += 1
                return closed
        self._sessions.append(frame.window)
        return closed

    def flush(self) -> CsiWindow | None:
        """Close and return the in-flight window (end of stream)."""
        merged = self._merge()
        self._sessions = []
        self._current_id = None
        return merged


def ingest_stream(frames, config: SystemConfig | None = None):
    """Reassemble a frame iterable into windows.

    Returns (windows, dropped_count).
    """
    ingestor = StreamIngestor(config)
    windows: list[CsiWindow] = []
    for frame in frames:
        windows.extend(ingestor.push(frame))
    last = ingestor.flush()
    if last is not None:
        windows.append(last)
    return windows, ingestor.dropped
