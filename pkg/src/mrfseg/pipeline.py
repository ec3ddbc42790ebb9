"""End-to-end segmentation loop.

Each superpixel starts as its own class; every iteration retrains the
one-vs-all bank on the current labeling, smooths the calibrated
probabilities over the adjacency graph, reassigns labels by maximum
posterior, and drops classes that lost all members.  The loop stops at a
fixed point, on a repeated labeling (cycle; the cycle state with the
highest energy wins), or at the iteration cap.
"""

import numpy as np
from dataclasses import dataclass, field, asdict

from . import classifier, descriptor, mrf, presegment
from .errors import SingleClassError
from .image_io import LabelMap, RasterImage, load_image, rgb_to_lab
from .presegment import SlicParams


@dataclass
class PipelineConfig:
    slic: SlicParams = field(default_factory=SlicParams)
    svm_c: float = 1.0
    svm_gamma: float = 0.001
    mrf_alpha: float = mrf.DEFAULT_ALPHA
    mrf_tol: float = mrf.DEFAULT_TOL
    mrf_max_sweeps: int = mrf.DEFAULT_MAX_SWEEPS
    max_outer_iters: int = 50
    texture_t1: float = descriptor.DEFAULT_T1
    texture_t2: float = descriptor.DEFAULT_T2

    def __post_init__(self):
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be >= 1")


@dataclass
class LabelState:
    assignment: np.ndarray  # per-superpixel label id, contiguous in [0, k)
    iteration: int

    @property
    def k(self):
        return int(self.assignment.max()) + 1 if self.assignment.size else 0


@dataclass
class StepInfo:
    iteration: int
    k_before: int
    k_after: int
    reassigned: int
    mrf_sweeps: int
    mrf_converged: bool
    energy: float


def initialize(m: int) -> LabelState:
    """Every superpixel is its own class."""
    if m < 1:
        raise ValueError("need at least one superpixel")
    return LabelState(assignment=np.arange(m, dtype=np.int64), iteration=0)


def step(state: LabelState, features, graph, config: PipelineConfig, trace=None):
    """One train / smooth / relabel / reduce round.

    Raises SingleClassError when only one class remains (convergence).
    """
    assignment = state.assignment
    bank = classifier.train_bank(features, assignment, config.svm_c, config.svm_gamma)
    likelihoods = classifier.classify_all(bank, features)
    beliefs, sweeps, converged = mrf.regularize(
        likelihoods,
        graph,
        alpha=config.mrf_alpha,
        tol=config.mrf_tol,
        max_sweeps=config.mrf_max_sweeps,
        trace=trace,
    )
    winners = mrf.map_labels(beliefs.posteriors)
    bank_labels = np.asarray(bank.labels)
    new_assignment = bank_labels[winners]

    # A label whose SVM could not be trained keeps its previous members.
    for lbl in bank.failed_labels():
        new_assignment[assignment == lbl] = lbl

    reassigned = int((new_assignment != assignment).sum())
    e = mrf.energy(
        beliefs, graph, np.searchsorted(bank_labels, new_assignment)
    )

    # drop empty classes, renumber contiguously preserving id order
    active = np.unique(new_assignment)
    remap = np.zeros(int(active.max()) + 1, dtype=np.int64)
    remap[active] = np.arange(active.size)
    new_state = LabelState(assignment=remap[new_assignment], iteration=state.iteration + 1)
    info = StepInfo(
        iteration=new_state.iteration,
        k_before=int(bank_labels.size),
        k_after=int(active.size),
        reassigned=reassigned,
        mrf_sweeps=sweeps,
        mrf_converged=converged,
        energy=e,
    )
    return new_state, info


def run(image, config: PipelineConfig = None, *, features_csv=None, mrf_trace=None):
    """Full pipeline from an image (path or RasterImage) to a LabelMap.

    Returns (LabelMap, diagnostics dict).  The diagnostics contain only
    deterministic content so repeated runs are byte-identical.
    ``features_csv`` / ``mrf_trace`` write debug dumps of the descriptor
    matrix and the per-sweep smoothing residual/energy.
    """
    if config is None:
        config = PipelineConfig()
    img = image if isinstance(image, RasterImage) else load_image(image)
    lab = rgb_to_lab(img)

    partition = presegment.slic(lab, config.slic)
    partition = presegment.superpixel_stats(partition, img, lab)
    codes = descriptor.texture_codes(lab, config.texture_t1, config.texture_t2)
    features = descriptor.describe_all(partition, img, codes)
    graph = mrf.edge_weights(mrf.build_adjacency(partition), partition.mean_rgb)

    if features_csv is not None:
        with open(features_csv, "w", encoding="utf-8") as f:
            for row in features:
                f.write(",".join(repr(v) for v in row) + "\n")

    state = initialize(partition.m)
    iterations = []
    history = {}  # assignment bytes -> index into states
    states = []  # (assignment, energy) after each step
    termination = None
    final_assignment = state.assignment
    selected = None

    if state.k == 1:
        termination = "single_class"

    trace_rows = [] if mrf_trace is not None else None
    while termination is None:
        if state.iteration >= config.max_outer_iters:
            termination = "iteration_cap"
            break
        sweep_trace = [] if mrf_trace is not None else None
        try:
            new_state, info = step(state, features, graph, config, trace=sweep_trace)
        except SingleClassError:
            termination = "single_class"
            break
        if mrf_trace is not None:
            trace_rows.extend((state.iteration + 1,) + row for row in sweep_trace)
        iterations.append(asdict(info))
        states.append((new_state.assignment, info.energy))
        final_assignment = new_state.assignment

        if new_state.k == 1:
            termination = "single_class"
            break
        if new_state.assignment.shape == state.assignment.shape and np.array_equal(
            new_state.assignment, state.assignment
        ):
            termination = "fixed_point"
            break
        key = new_state.assignment.tobytes()
        if key in history:
            start = history[key]
            cycle = states[start:-1]
            best = max(range(len(cycle)), key=lambda i: (cycle[i][1], -i))
            final_assignment = cycle[best][0]
            selected = {
                "start_iteration": start + 1,
                "period": len(cycle),
                "selected_iteration": start + 1 + best,
            }
            termination = "cycle"
            break
        history[key] = len(states) - 1
        state = new_state

    if mrf_trace is not None:
        with open(mrf_trace, "w", encoding="utf-8") as f:
            f.write("iteration,sweep,residual,energy\n")
            for iteration, sweep, residual, e in trace_rows:
                f.write(f"{iteration},{sweep},{residual!r},{e!r}\n")

    label_map = LabelMap(
        data=final_assignment[partition.labels].astype(np.int64),
        num_labels=int(final_assignment.max()) + 1,
    )
    diagnostics = {
        "image": {"width": img.width, "height": img.height},
        "superpixels": partition.m,
        "config": {
            "superpixels": config.slic.k,
            "compactness": config.slic.m,
            "slic_iters": config.slic.max_iters,
            "min_region_frac": config.slic.min_region_frac,
            "gamma": config.svm_gamma,
            "c": config.svm_c,
            "mrf_alpha": config.mrf_alpha,
            "mrf_tol": config.mrf_tol,
            "mrf_max_sweeps": config.mrf_max_sweeps,
            "max_iters": config.max_outer_iters,
            "t1": config.texture_t1,
            "t2": config.texture_t2,
        },
        "iterations": iterations,
        "termination": termination,
        "final_k": label_map.num_labels,
    }
    if selected is not None:
        diagnostics["cycle"] = selected
    return label_map, diagnostics
