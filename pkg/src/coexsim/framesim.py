"""Frame-by-frame simulator of the shared TDD structure.

Each frame of duration T carries a DL/sensing portion and a UL portion; the
UL portion drains the device's feature buffer at rho_ul * T * R_full bits per
frame. A batch's upload is complete at the end of the frame in which its last
bit leaves the buffer (the receiver consumes whole subframes), which is what
makes the measured per-batch upload delay the frame-quantized ceiling rather
than the fluid n_b/R value. Batches are back-to-back: the next one is
generated the instant the previous upload completes.

Cumulative drained bits are computed multiplicatively (capacity times frame
count, capped at n_b) rather than by repeated addition, so the completion
frame agrees exactly with the closed-form ceiling for every (n_b, rho_ul).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import ChannelSet
from .ei_service import Representation, ul_rate
from .scenario import InferenceModelProfile, Scenario


@dataclass(frozen=True)
class FrameRecord:
    frame_index: int
    rho_ul: float
    ul_window_start_s: float
    ul_window_end_s: float
    bits_uploaded: float
    backlog_bits: float


@dataclass(frozen=True)
class BatchRecord:
    batch_id: int
    gen_frame: int
    complete_frame: int
    compute_done_s: float
    l_comm_s: float
    l_comp_s: float
    l_tot_s: float


@dataclass(frozen=True)
class FrameTrace:
    frames: tuple[FrameRecord, ...]
    batches: tuple[BatchRecord, ...]
    rho_ul: float
    capacity_bits_per_frame: float


def simulate(s: Scenario, cs: ChannelSet, rep: Representation,
             model: InferenceModelProfile, rho_ul: float, n_batches: int,
             seed: int, ul_placement: str = "tail") -> FrameTrace:
    """Run n_batches uploads through the frame structure and record the trace."""
    if not 0.0 < rho_ul <= 1.0:
        raise ValueError(f"rho_ul must be in (0,1], got {rho_ul}")
    if n_batches < 1:
        raise ValueError("n_batches must be >= 1")
    if ul_placement not in ("tail", "head"):
        raise ValueError(f"ul_placement must be 'tail' or 'head', got {ul_placement!r}")
    T = s.frame_duration_s
    r_full = ul_rate(s, cs, 1.0)
    capacity = rho_ul * T * r_full
    if capacity <= 0.0:
        raise ValueError("zero UL capacity: no bits can ever leave the buffer")

    rng = np.random.default_rng(seed)
    frames: list[FrameRecord] = []
    batches: list[BatchRecord] = []
    gen_frame = 0
    for b in range(n_batches):
        # bits out of the buffer by the end of the k-th frame of this batch
        drained_prev = 0.0
        k = 0
        while drained_prev < rep.n_b:
            k += 1
            drained = min(float(rep.n_b), capacity * k)
            fidx = gen_frame + k - 1
            if ul_placement == "tail":
                w0 = fidx * T + (1.0 - rho_ul) * T
                w1 = (fidx + 1) * T
            else:
                w0 = fidx * T
                w1 = fidx * T + rho_ul * T
            frames.append(FrameRecord(
                frame_index=fidx, rho_ul=rho_ul,
                ul_window_start_s=w0, ul_window_end_s=w1,
                bits_uploaded=drained - drained_prev,
                backlog_bits=rep.n_b - drained))
            drained_prev = drained
        complete_frame = gen_frame + k - 1
        l_comm = k * T
        l_comp = float(model.delay_dist.sample(rng, 1)[0])
        batches.append(BatchRecord(
            batch_id=b, gen_frame=gen_frame, complete_frame=complete_frame,
            compute_done_s=(complete_frame + 1) * T + l_comp,
            l_comm_s=l_comm, l_comp_s=l_comp, l_tot_s=l_comm + l_comp))
        gen_frame = complete_frame + 1
    return FrameTrace(frames=tuple(frames), batches=tuple(batches),
                      rho_ul=rho_ul, capacity_bits_per_frame=capacity)


def trace_to_csv(trace: FrameTrace, frames_path: str | Path,
                 batches_path: str | Path):
    with open(frames_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame_index", "rho_ul", "ul_window_start_s",
                    "ul_window_end_s", "bits_uploaded", "backlog_bits"])
        for fr in trace.frames:
            w.writerow([fr.frame_index, "%.17g" % fr.rho_ul,
                        "%.17g" % fr.ul_window_start_s, "%.17g" % fr.ul_window_end_s,
                        "%.17g" % fr.bits_uploaded, "%.17g" % fr.backlog_bits])
    with open(batches_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["batch_id", "gen_frame", "complete_frame", "compute_done_s",
                    "l_comm_s", "l_comp_s", "l_tot_s"])
        for b in trace.batches:
            w.writerow([b.batch_id, b.gen_frame, b.complete_frame,
                        "%.17g" % b.compute_done_s, "%.17g" % b.l_comm_s,
                        "%.17g" % b.l_comp_s, "%.17g" % b.l_tot_s])
