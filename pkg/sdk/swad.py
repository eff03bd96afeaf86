"""
Overfit-aware dense weight averaging.

Validation losses arrive every `period` iterations; parameters arrive every
iteration. Regime detection works on validation points: the start is the first
point whose loss is no worse than the next n_start - 1 losses, the end is
declared once n_end consecutive losses exceed ratio x the mean loss of the
starting window. Validation point k maps to iterations ((k-1)V, kV], so the
regime [t_s, t_e] always covers whole segments and each segment's parameter
sum is kept instead of per-iteration snapshots.
"""
from collections import deque
from dataclasses import dataclass
from enum import StrEnum

import numpy as np
from loguru import logger

from sdk.errors import SwadError


class Phase(StrEnum):
    SEARCHING = "searching"
    AVERAGING = "averaging"
    FINISHED = "finished"


@dataclass
class Segment:
    first_iter: int
    last_iter: int
    total: np.ndarray
    count: int


class SwadState:
    def __init__(self, n_start: int = 3, n_end: int = 6, ratio: float = 1.3, period: int = 1):
        if n_start < 1 or n_end < 1 or period < 1:
            raise ValueError(f"SWAD windows and period must be >= 1 (n_start={n_start}, n_end={n_end}, period={period})")
        if ratio <= 1.0:
            raise ValueError(f"SWAD ratio must exceed 1, got {ratio}")
        self.n_start = n_start
        self.n_end = n_end
        self.ratio = ratio
        self.period = period

        self.loss_history: list[tuple[int, float]] = []
        self.phase = Phase.SEARCHING
        self.t_s: int | None = None
        self.t_e: int | None = None
        self.reference_loss: float | None = None
        self.running_sum: np.ndarray | None = None
        self.count = 0
        self.tail_buffer: deque[Segment] = deque()

        self._open: Segment | None = None
        self._last_iter = 0
        self._last_params: np.ndarray | None = None

    # --- public API ---

    def observe(self, iteration: int, params: np.ndarray, val_loss: float | None = None) -> "SwadState":
        if self.phase is Phase.FINISHED:
            raise SwadError(f"observe({iteration}) after the averaging regime finished at t_e={self.t_e}")
        if iteration <= self._last_iter:
            raise SwadError(f"iterations must strictly increase ({iteration} after {self._last_iter})")
        at_validation = iteration % self.period == 0
        if at_validation != (val_loss is not None):
            raise SwadError(f"validation loss must be given exactly at multiples of {self.period} (iteration {iteration})")

        params = np.asarray(params, dtype=np.float64)
        self._last_iter = iteration
        self._last_params = params.copy()
        if self._open is None:
            self._open = Segment(iteration, iteration, params.copy(), 1)
        else:
            self._open.total += params
            self._open.last_iter = iteration
            self._open.count += 1

        if val_loss is None:
            return self

        segment, self._open = self._open, None
        self.loss_history.append((iteration, float(val_loss)))
        if self.phase is Phase.SEARCHING:
            self._search(segment)
        else:
            self._average(segment)
        return self

    def finalize(self, t_max: int | None = None) -> np.ndarray:
        """Average over [t_s, min(t_e, t_max)]; the last parameters if no regime was found."""
        if self._last_params is None:
            raise SwadError("finalize called before any parameters were observed")
        if self.phase is Phase.SEARCHING:
            logger.warning("SWAD never entered the averaging regime; returning the final parameters")
            return self._last_params.copy()

        total = None if self.running_sum is None else self.running_sum.copy()
        count = self.count
        if self.phase is Phase.AVERAGING:
            pending = list(self.tail_buffer) + ([self._open] if self._open is not None else [])
            for segment in pending:
                if t_max is not None and segment.last_iter > t_max:
                    continue
                total = segment.total.copy() if total is None else total + segment.total
                count += segment.count
        if total is None or count == 0:
            return self._last_params.copy()
        return total / count

    @property
    def events(self) -> dict:
        return {"t_s": self.t_s, "t_e": self.t_e, "reference_loss": self.reference_loss, "phase": str(self.phase)}

    # --- regime detection ---

    def _search(self, segment: Segment):
        self.tail_buffer.append(segment)
        while len(self.tail_buffer) > self.n_start:
            self.tail_buffer.popleft()

        window = [loss for _, loss in self.loss_history[-self.n_start:]]
        if len(window) < self.n_start or window[0] > min(window):
            return

        self.t_s = self.tail_buffer[0].first_iter
        self.reference_loss = float(np.mean(window))
        self.phase = Phase.AVERAGING
        logger.info(f"SWAD regime start: t_s={self.t_s}, reference validation loss={self.reference_loss:.6f}")

        # Retroactively average the segments of the starting window.
        segments = list(self.tail_buffer)
        self.tail_buffer.clear()
        for s in segments:
            self._push(s)

    def _average(self, segment: Segment):
        self._push(segment)
        window = [loss for _, loss in self.loss_history[-self.n_end:]]
        if len(window) < self.n_end or min(window) <= self.ratio * self.reference_loss:
            return

        self.t_e = self.loss_history[-(self.n_end + 1)][0]
        for s in self.tail_buffer:
            if s.last_iter <= self.t_e:
                self._commit(s)
        self.tail_buffer.clear()
        self.phase = Phase.FINISHED
        logger.info(f"SWAD regime end: t_e={self.t_e} ({self.count} iterations averaged since t_s={self.t_s})")

    def _push(self, segment: Segment):
        self.tail_buffer.append(segment)
        while len(self.tail_buffer) > self.n_end:
            self._commit(self.tail_buffer.popleft())

    def _commit(self, segment: Segment):
        self.running_sum = segment.total.copy() if self.running_sum is None else self.running_sum + segment.total
        self.count += segment.count
