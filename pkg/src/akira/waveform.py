"""Defect-evolution waveform: signal channels, smoothing, and trigger rules.

Every detection report is folded into a five-channel count vector
(unchecked operations, global objects, interoperability, low-level
control, concurrency objects).  The counts are normalized, smoothed with
an exponential moving average, and combined into a single incorrectness
score per repair step.  The resulting score series drives two triggers:
rollback points (sharp fluctuation or threshold crossing) and semantic
evaluation points (stabilization in a low-variance region).
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Sequence

from .errors import ScriptError

if TYPE_CHECKING:
    from .detection import DetectionReport

#: Channel letters in vector order.
CHANNELS = ("U", "G", "I", "L", "C")

DEFAULT_NORMALIZATION_CAP = 8
DEFAULT_SMOOTHING_ALPHA = 0.5


@dataclass(frozen=True)
class SignalChannels:
    """Raw per-channel finding counts for one repair step."""

    u: int = 0
    g: int = 0
    i: int = 0
    l: int = 0
    c: int = 0

    def __post_init__(self) -> None:
        if any(v < 0 for v in self.as_tuple()):
            raise ValueError("channel counts must be non-negative")

    def as_tuple(self) -> tuple[int, int, int, int, int]:
        return (self.u, self.g, self.i, self.l, self.c)

    @property
    def total(self) -> int:
        return sum(self.as_tuple())


@dataclass(frozen=True)
class NormalizedSignals:
    """Channel counts scaled into [0, 1]."""

    values: tuple[float, float, float, float, float]

    def __post_init__(self) -> None:
        if len(self.values) != len(CHANNELS):
            raise ValueError("expected one value per channel")
        if any(not 0.0 <= v <= 1.0 for v in self.values):
            raise ValueError("normalized values must lie in [0, 1]")


@dataclass(frozen=True)
class WeightVector:
    """Per-channel weights; always re-normalized so they sum to 1."""

    w: tuple[float, float, float, float, float]

    def __post_init__(self) -> None:
        if len(self.w) != len(CHANNELS):
            raise ValueError("expected one weight per channel")
        if any(v < 0 for v in self.w):
            raise ValueError("weights must be non-negative")
        total = sum(self.w)
        if total <= 0:
            raise ValueError("at least one weight must be positive")
        object.__setattr__(self, "w", tuple(v / total for v in self.w))

    @classmethod
    def uniform(cls) -> "WeightVector":
        return cls((1.0,) * len(CHANNELS))


@dataclass(frozen=True)
class WaveformPoint:
    """One fully derived step of the waveform."""

    step: int
    raw: SignalChannels
    normalized: NormalizedSignals
    smoothed: tuple[float, float, float, float, float]
    e: float


@dataclass
class Waveform:
    """Ordered list of waveform points with strictly increasing steps."""

    points: list[WaveformPoint] = field(default_factory=list)

    def append(self, point: WaveformPoint) -> None:
        if self.points and point.step != self.points[-1].step + 1:
            raise ValueError("waveform steps must increase by exactly 1")
        if not self.points and point.step != 0:
            raise ValueError("waveform must start at step 0")
        self.points.append(point)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def e_values(self) -> list[float]:
        return [p.e for p in self.points]

    def argmin_e(self) -> int:
        """Index of the lowest incorrectness score (earliest on ties)."""
        if not self.points:
            raise ValueError("empty waveform")
        es = self.e_values
        return min(range(len(es)), key=lambda k: (es[k], k))


class ChannelMap:
    """Mapping from detector category labels to signal channels.

    The table ships as an editable data file of ``category = channel``
    lines.  Labels missing from the table are remapped to the U channel
    and reported by :meth:`unknown_labels` so the session trace can flag
    them.
    """

    def __init__(self, table: dict[str, str]):
        for label, channel in table.items():
            if channel not in CHANNELS:
                raise ScriptError(f"unknown channel letter {channel!r} for {label!r}")
        self._table = {k.strip().lower(): v for k, v in table.items()}

    @classmethod
    def load(cls, path: str | Path) -> "ChannelMap":
        table: dict[str, str] = {}
        for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ScriptError(f"{path}:{lineno}: expected 'category = channel'")
            label, channel = (part.strip() for part in line.split("=", 1))
            if channel not in CHANNELS:
                raise ScriptError(f"{path}:{lineno}: unknown channel letter {channel!r}")
            table[label] = channel
        return cls(table)

    @classmethod
    def default(cls) -> "ChannelMap":
        ref = resources.files("akira.data").joinpath("channels.map")
        with resources.as_file(ref) as path:
            return cls.load(path)

    def channel_for(self, label: str) -> str:
        return self._table.get(label.strip().lower(), "U")

    def knows(self, label: str) -> bool:
        return label.strip().lower() in self._table

    def unknown_labels(self, labels: Iterable[str]) -> tuple[str, ...]:
        return tuple(lbl for lbl in labels if not self.knows(lbl))


def categorize(report: "DetectionReport", table: ChannelMap | None = None) -> SignalChannels:
    """Fold a detection report into per-channel counts.

    The sum of the channels always equals the number of findings;
    unknown category labels count against the U channel.
    """
    table = table or ChannelMap.default()
    counts = {ch: 0 for ch in CHANNELS}
    for finding in report.findings:
        counts[table.channel_for(finding.category)] += 1
    return SignalChannels(
        u=counts["U"], g=counts["G"], i=counts["I"], l=counts["L"], c=counts["C"]
    )


def normalize(channels: SignalChannels, cap: int = DEFAULT_NORMALIZATION_CAP) -> NormalizedSignals:
    """Scale counts into [0, 1] with saturation at ``cap``."""
    if cap < 1:
        raise ValueError("cap must be >= 1")
    return NormalizedSignals(tuple(min(v, cap) / cap for v in channels.as_tuple()))


def smooth(history: Sequence[float], alpha: float = DEFAULT_SMOOTHING_ALPHA) -> float:
    """Exponential moving average of one channel's normalized history.

    s0 = x0 and s_t = alpha * x_t + (1 - alpha) * s_{t-1}; the value for
    the latest step is returned.
    """
    if not history:
        raise ValueError("smooth requires a non-empty history")
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must be in (0, 1]")
    value = history[0]
    for x in history[1:]:
        value = alpha * x + (1.0 - alpha) * value
    return value


def incorrectness(smoothed: Sequence[float], weights: WeightVector) -> float:
    """Weighted sum of smoothed channel values; lands in [0, 1]."""
    if len(smoothed) != len(CHANNELS):
        raise ValueError("expected one smoothed value per channel")
    if any(not 0.0 <= v <= 1.0 for v in smoothed):
        raise ValueError("smoothed components must lie in [0, 1]")
    if abs(sum(weights.w) - 1.0) > 1e-9:
        raise ValueError("weights must be normalized")
    return sum(w * s for w, s in zip(weights.w, smoothed))


def detect_rollback_point(
    e_series: Sequence[float], abs_threshold: float, jump_threshold: float
) -> bool:
    """True when the score crossed the absolute threshold or jumped sharply.

    The jump test needs at least two points; the absolute test applies
    from the first point on.
    """
    if not e_series:
        raise ValueError("empty score series")
    if e_series[-1] > abs_threshold:
        return True
    if len(e_series) >= 2 and abs(e_series[-1] - e_series[-2]) > jump_threshold:
        return True
    return False


def detect_eval_point(
    e_series: Sequence[float], window: int, variance_threshold: float
) -> bool:
    """True when the last ``window`` scores sit in a low-variance region."""
    if window < 2:
        raise ValueError("window must be >= 2")
    if len(e_series) < window:
        return False
    return statistics.pvariance(e_series[-window:]) < variance_threshold


def hallucination_score(e_series: Sequence[float]) -> float:
    """Worst upward drift of the score series: max E(t) minus E(0)."""
    if not e_series:
        raise ValueError("empty score series")
    return max(e_series) - e_series[0]


def update_weights(
    frequencies: Sequence[int], severities: Sequence[float]
) -> WeightVector:
    """Derive channel weights from historical repair frequency and severity.

    Each weight is proportional to frequency * severity; an all-zero
    history yields uniform weights.
    """
    if len(frequencies) != len(CHANNELS) or len(severities) != len(CHANNELS):
        raise ValueError("expected one frequency and severity per channel")
    if any(f < 0 for f in frequencies):
        raise ValueError("frequencies must be non-negative")
    if any(not 0.0 <= s <= 1.0 for s in severities):
        raise ValueError("severities must lie in [0, 1]")
    raw = [f * s for f, s in zip(frequencies, severities)]
    if sum(raw) <= 0:
        return WeightVector.uniform()
    return WeightVector(tuple(raw))
