"""One-vs-all RBF SVMs with Platt-calibrated probability outputs.

The dual problem is solved by an in-package SMO loop (see backends);
calibration follows Platt's sigmoid fit with the prior-corrected targets
and a Newton/backtracking optimizer.  Features are standardized before
the kernel so the fixed RBF width is meaningful on mixed-scale columns.
"""

import numpy as np
from dataclasses import dataclass

from . import backends
from .errors import DegenerateLabelsError, SingleClassError

KKT_TOL = 1e-3
PROB_FLOOR = 1e-10
_STD_FLOOR = 1e-12


@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray  # floored, so constant columns divide to exactly 0

    def apply(self, x):
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std


@dataclass
class FeatureScale:
    """Fixed per-column scaling that matches the RBF width to the data.

    gamma = 0.001 means the kernel length scale is ~32, the scale of
    8-bit mean-intensity contrasts between differently colored regions,
    so the three channel means go on the 0..255 scale (squared cross-
    region distances in the thousands, kernel ~ 0; within-region noise
    in the tens, kernel ~ 1).  The higher moments and the normalized
    histogram stay in their natural [0, 1]-ish units: they vary as much
    within a region (boundary superpixels mix colors and spike the
    spread/skew) as between regions, and inflating them fragments
    coherent regions.  Data-dependent unit-variance standardization is
    worse still: every column lands at noise scale and the kernel loses
    contrast entirely.
    """

    factors: np.ndarray

    def apply(self, x):
        return np.asarray(x, dtype=np.float64) * self.factors


def intensity_scale(n_features=57):
    factors = np.ones(n_features)
    factors[0:9:3] = 255.0  # per-channel means only
    return FeatureScale(factors=factors)


@dataclass
class SvmModel:
    support_vectors: np.ndarray  # rows of the standardized training matrix
    dual_coef: np.ndarray  # alpha_i * y_i for the support vectors
    bias: float
    gamma: float
    c: float

    def decision_function(self, x_std, kernel=None):
        if kernel is None:
            kernel = rbf_kernel(self.support_vectors, x_std, self.gamma)
        return self.dual_coef @ kernel + self.bias


@dataclass
class PlattParams:
    a: float
    b: float

    def probability(self, scores):
        z = self.a * np.asarray(scores, dtype=np.float64) + self.b
        # stable logistic: 1 / (1 + exp(z))
        out = np.empty_like(z, dtype=np.float64)
        pos = z >= 0
        out[pos] = np.exp(-z[pos]) / (1.0 + np.exp(-z[pos]))
        out[~pos] = 1.0 / (1.0 + np.exp(z[~pos]))
        return out


@dataclass
class ClassifierBank:
    labels: list  # active label ids, in ascending order
    models: list  # SvmModel or None where training degenerated
    platt: list  # PlattParams or None
    scaler: Standardizer

    @property
    def k(self):
        return len(self.labels)

    def failed_labels(self):
        return [lbl for lbl, mdl in zip(self.labels, self.models) if mdl is None]


def standardize(x):
    """Zero-mean unit-variance columns; returns (transformed, Standardizer)."""
    x = np.asarray(x, dtype=np.float64)
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.maximum(std, _STD_FLOOR)
    scaler = Standardizer(mean=mean, std=std)
    return scaler.apply(x), scaler


def rbf_kernel(u, v, gamma):
    """exp(-gamma * ||u_i - v_j||^2) for row sets u, v."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    sq = (u * u).sum(axis=1)[:, None] + (v * v).sum(axis=1)[None, :] - 2.0 * (u @ v.T)
    return np.exp(-gamma * np.maximum(sq, 0.0))


def train_binary_svm(x_std, y, c, gamma, kernel=None):
    """Soft-margin SVM via SMO on the (optionally precomputed) kernel."""
    y = np.asarray(y, dtype=np.float64)
    if np.all(y > 0) or np.all(y < 0):
        raise DegenerateLabelsError("training labels contain a single class")
    x_std = np.asarray(x_std, dtype=np.float64)
    if kernel is None:
        kernel = rbf_kernel(x_std, x_std, gamma)
    kernel = np.ascontiguousarray(kernel)
    alpha, bias = backends.smo_solve(kernel, np.ascontiguousarray(y), float(c),
                                     KKT_TOL, 10 * len(y))
    sv = alpha > 0.0
    return SvmModel(
        support_vectors=x_std[sv].copy(),
        dual_coef=alpha[sv] * y[sv],
        bias=float(bias),
        gamma=float(gamma),
        c=float(c),
    ), alpha


def kkt_violation(kernel, y, alpha, bias, c):
    """Largest KKT violation margin; <= KKT_TOL at proper convergence."""
    scores = (alpha * y) @ kernel + bias
    r = (scores - y) * y
    viol_lo = np.where(alpha < c, np.maximum(0.0, -r), 0.0)
    viol_hi = np.where(alpha > 0, np.maximum(0.0, r), 0.0)
    return float(np.maximum(viol_lo, viol_hi).max())


def platt_fit(scores, y, max_iters=100, step_tol=1e-10):
    """Fit p(y=1|s) = 1 / (1 + exp(A*s + B)) by regularized cross-entropy.

    Newton steps with backtracking line search; targets use Platt's
    prior correction (N+ + 1)/(N+ + 2) and 1/(N- + 2).
    """
    scores = np.asarray(scores, dtype=np.float64)
    y = np.asarray(y)
    pos = y > 0
    n_pos = int(pos.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabelsError("calibration requires both classes")

    target = np.where(pos, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))

    def objective(a, b):
        z = a * scores + b
        # sum t*z + log(1 + exp(-z)), stable for either sign of z
        return float(np.sum(target * z + np.logaddexp(0.0, -z)))

    a, b = 0.0, np.log((n_neg + 1.0) / (n_pos + 1.0))
    fval = objective(a, b)
    sigma = 1e-12  # Hessian ridge

    for _ in range(max_iters):
        z = a * scores + b
        p = np.empty_like(z)
        m = z >= 0
        p[m] = np.exp(-z[m]) / (1.0 + np.exp(-z[m]))
        p[~m] = 1.0 / (1.0 + np.exp(z[~m]))
        d1 = target - p
        d2 = p * (1.0 - p)
        g_a = float(np.dot(scores, d1))
        g_b = float(d1.sum())
        h_aa = float(np.dot(scores * scores, d2)) + sigma
        h_bb = float(d2.sum()) + sigma
        h_ab = float(np.dot(scores, d2))
        det = h_aa * h_bb - h_ab * h_ab
        da = -(h_bb * g_a - h_ab * g_b) / det
        db = -(h_aa * g_b - h_ab * g_a) / det
        gd = g_a * da + g_b * db

        stepsize = 1.0
        while stepsize >= 1e-12:
            na, nb = a + stepsize * da, b + stepsize * db
            nf = objective(na, nb)
            if nf <= fval + 1e-4 * stepsize * gd:
                break
            stepsize *= 0.5
        else:
            break
        moved = stepsize * max(abs(da), abs(db))
        a, b, fval = na, nb, nf
        if moved < step_tol:
            break
    return PlattParams(a=float(a), b=float(b))


CALIBRATION_FOLDS = 3
CALIBRATION_MIN_CLASS = 6  # below this, fold models drift too far from the full model


def _fold_ids(y, n_folds):
    """Deterministic stratified folds: round-robin over each class in index order."""
    folds = np.empty(len(y), dtype=np.int64)
    for sign in (1.0, -1.0):
        idx = np.flatnonzero(y == sign)
        folds[idx] = np.arange(idx.size) % n_folds
    return folds


def calibration_scores(kernel, y, c, n_folds=CALIBRATION_FOLDS):
    """Decision scores for sigmoid fitting: cross-validated when possible.

    Fitting the sigmoid on in-sample scores is badly biased: any class
    whose members merely outrank the rest in-sample gets an arbitrarily
    steep sigmoid and certifies itself forever, and negatives that
    resemble the positives were explicitly trained against, so their
    scores say nothing about affinity.  Held-out scores fix both.
    Small classes fall back to in-sample scores: removing a third of a
    handful of positives shifts the fold models' score scale so far from
    the full model's that the fitted sigmoid lands in the wrong place.
    The prior-corrected targets still bound a small class's calibrated
    confidence by (n_pos + 1)/(n_pos + 2).
    """
    y = np.ascontiguousarray(y, dtype=np.float64)
    m = len(y)
    n_pos = int((y > 0).sum())
    n_neg = m - n_pos
    if min(n_pos, n_neg) < CALIBRATION_MIN_CLASS or m < n_folds:
        alpha, bias = backends.smo_solve(
            np.ascontiguousarray(kernel), y, float(c), KKT_TOL, 10 * m
        )
        return (alpha * y) @ kernel + bias
    folds = _fold_ids(y, n_folds)
    scores = np.empty(m)
    for f in range(n_folds):
        test = folds == f
        train = ~test
        y_tr = np.ascontiguousarray(y[train])
        sub_kernel = np.ascontiguousarray(kernel[np.ix_(train, train)])
        alpha, bias = backends.smo_solve(sub_kernel, y_tr, float(c), KKT_TOL, 10 * len(y_tr))
        scores[test] = (alpha * y_tr) @ kernel[np.ix_(train, test)] + bias
    return scores


def train_bank(x, labels, c, gamma):
    """Train one calibrated SVM per active label (Kronecker-delta targets).

    The decision function comes from the full-sample SVM; the sigmoid is
    fitted to cross-validated scores.
    """
    labels = np.asarray(labels)
    active = np.unique(labels)
    if active.size < 2:
        raise SingleClassError("only one label present")

    scaler = intensity_scale(np.asarray(x).shape[1])
    x_std = scaler.apply(x)
    kernel = rbf_kernel(x_std, x_std, gamma)

    models, platts = [], []
    for lbl in active:
        yk = np.where(labels == lbl, 1.0, -1.0)
        try:
            model, _ = train_binary_svm(x_std, yk, c, gamma, kernel=kernel)
            platt = platt_fit(calibration_scores(kernel, yk, c), yk)
        except DegenerateLabelsError:
            model, platt = None, None
        models.append(model)
        platts.append(platt)
    return ClassifierBank(
        labels=[int(lbl) for lbl in active], models=models, platt=platts, scaler=scaler
    )


def classify_all(bank: ClassifierBank, x, x_is_standardized=False):
    """Calibrated probability matrix (M, K); rows renormalized to sum 1."""
    x_std = x if x_is_standardized else bank.scaler.apply(x)
    m = x_std.shape[0]
    probs = np.full((m, bank.k), PROB_FLOOR)
    for col, (model, platt) in enumerate(zip(bank.models, bank.platt)):
        if model is None:
            continue
        probs[:, col] = platt.probability(model.decision_function(x_std))
    probs = np.maximum(probs, PROB_FLOOR)
    return probs / probs.sum(axis=1, keepdims=True)
