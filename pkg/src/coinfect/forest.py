"""From-scratch random-forest classifier with OOB error, permutation
importance (mean decrease of accuracy) and a two-stage variable selector.

Trees are unpruned CART trees on the 4-class response: bootstrap sampling,
uniformly random mtry-subsets of covariates at each node, best split by
weighted Gini impurity, midpoint thresholds between consecutive distinct
values.  All tie-breaks (feature, threshold, vote) go to the lowest index so
growth is fully deterministic given the seed.

The hot loops are numba-compiled; a whole forest is grown in a single
compiled call and stored as flat node arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .rng import stream

__all__ = [
    "ForestConfig",
    "ForestModel",
    "ImportanceReport",
    "SelectionResult",
    "grow_forest",
    "predict",
    "oob_error",
    "mda_importance",
    "vsurf_select",
]

_LEAF = -1


@njit(cache=True)
def _grow_forest_kernel(X, y, seeds, mtry, min_node_size, max_depth, is_binary):
    n, p = X.shape
    ntree = seeds.shape[0]
    max_tree_nodes = 2 * n + 1

    cap = ntree * 64 + max_tree_nodes
    feature = np.empty(cap, np.int32)
    threshold = np.empty(cap, np.float64)
    left = np.empty(cap, np.int32)
    right = np.empty(cap, np.int32)
    label = np.empty(cap, np.int8)
    offsets = np.empty(ntree + 1, np.int64)

    boot = np.empty((ntree, n), np.int32)
    oob_mask = np.zeros((ntree, n), np.bool_)

    idx = np.empty(n, np.int64)
    tmp = np.empty(n, np.int64)
    feats = np.empty(p, np.int64)
    lcnt = np.empty((p, 4), np.int64)
    stack_start = np.empty(max_tree_nodes, np.int64)
    stack_end = np.empty(max_tree_nodes, np.int64)
    stack_node = np.empty(max_tree_nodes, np.int64)
    stack_depth = np.empty(max_tree_nodes, np.int64)
    # class counts are carried on the stack so each node skips a counting pass
    stack_c = np.empty((max_tree_nodes, 4), np.int64)

    cursor = 0
    for t in range(ntree):
        offsets[t] = cursor
        # grow capacity if the worst-case tree would not fit
        if cursor + max_tree_nodes > cap:
            new_cap = max(2 * cap, cursor + max_tree_nodes)
            nf = np.empty(new_cap, np.int32); nf[:cursor] = feature[:cursor]; feature = nf
            nt = np.empty(new_cap, np.float64); nt[:cursor] = threshold[:cursor]; threshold = nt
            nl = np.empty(new_cap, np.int32); nl[:cursor] = left[:cursor]; left = nl
            nr = np.empty(new_cap, np.int32); nr[:cursor] = right[:cursor]; right = nr
            nb = np.empty(new_cap, np.int8); nb[:cursor] = label[:cursor]; label = nb
            cap = new_cap

        np.random.seed(seeds[t])
        for i in range(n):
            b = np.random.randint(0, n)
            boot[t, i] = b
            idx[i] = b
        for i in range(n):
            oob_mask[t, i] = True
        for i in range(n):
            oob_mask[t, boot[t, i]] = False

        root = cursor
        cursor += 1
        stack_start[0] = 0
        stack_end[0] = n
        stack_node[0] = root
        stack_depth[0] = 0
        rc0 = 0; rc1 = 0; rc2 = 0; rc3 = 0
        for i in range(n):
            yi = y[idx[i]]
            if yi == 0:
                rc0 += 1
            elif yi == 1:
                rc1 += 1
            elif yi == 2:
                rc2 += 1
            else:
                rc3 += 1
        stack_c[0, 0] = rc0; stack_c[0, 1] = rc1
        stack_c[0, 2] = rc2; stack_c[0, 3] = rc3
        sp = 1
        while sp > 0:
            sp -= 1
            start = stack_start[sp]
            end = stack_end[sp]
            node = stack_node[sp]
            depth = stack_depth[sp]
            c0 = stack_c[sp, 0]; c1 = stack_c[sp, 1]
            c2 = stack_c[sp, 2]; c3 = stack_c[sp, 3]
            n_node = end - start
            nn = float(n_node)
            parent_gini = 1.0 - (c0 * c0 + c1 * c1 + c2 * c2 + c3 * c3) / (nn * nn)

            pure = (c0 == n_node) or (c1 == n_node) or (c2 == n_node) or (c3 == n_node)
            depth_stop = max_depth >= 0 and depth >= max_depth
            if pure or n_node < min_node_size or depth_stop:
                feature[node] = _LEAF
                label[node] = _majority4(c0, c1, c2, c3)
                continue

            # sample mtry distinct covariates (partial Fisher-Yates), then
            # scan them in ascending index order for deterministic tie-breaks
            m = mtry if mtry < p else p
            for j in range(p):
                feats[j] = j
            for j in range(m):
                r = j + np.random.randint(0, p - j)
                fj = feats[j]; feats[j] = feats[r]; feats[r] = fj
            # in-place insertion sort of the selected m indices
            for j in range(1, m):
                key = feats[j]
                i = j - 1
                while i >= 0 and feats[i] > key:
                    feats[i + 1] = feats[i]
                    i -= 1
                feats[i + 1] = key

            # {0,1} features have a single candidate split at 0.5; count the
            # left-side classes for all selected binary features in one pass
            any_binary = False
            for si in range(m):
                if is_binary[feats[si]]:
                    any_binary = True
                    lcnt[si, 0] = 0; lcnt[si, 1] = 0
                    lcnt[si, 2] = 0; lcnt[si, 3] = 0
            if any_binary:
                for i in range(start, end):
                    row = idx[i]
                    yi = y[row]
                    for si in range(m):
                        f = feats[si]
                        if is_binary[f] and X[row, f] <= 0.5:
                            lcnt[si, yi] += 1

            best_cost = np.inf
            best_f = -1
            best_thr = 0.0
            for si in range(m):
                f = feats[si]
                if is_binary[f]:
                    l0 = lcnt[si, 0]; l1 = lcnt[si, 1]
                    l2 = lcnt[si, 2]; l3 = lcnt[si, 3]
                    nl = float(l0 + l1 + l2 + l3)
                    nr = nn - nl
                    if nl == 0.0 or nr == 0.0:
                        continue
                    r0 = c0 - l0; r1 = c1 - l1; r2 = c2 - l2; r3 = c3 - l3
                    gl = 1.0 - (l0 * l0 + l1 * l1 + l2 * l2 + l3 * l3) / (nl * nl)
                    gr = 1.0 - (r0 * r0 + r1 * r1 + r2 * r2 + r3 * r3) / (nr * nr)
                    cost = (nl * gl + nr * gr) / nn
                    if cost < best_cost:
                        best_cost = cost
                        best_f = f
                        best_thr = 0.5
                    continue
                v = np.empty(n_node, np.float64)
                for i in range(n_node):
                    v[i] = X[idx[start + i], f]
                order = np.argsort(v)
                l0 = 0; l1 = 0; l2 = 0; l3 = 0
                for i in range(n_node - 1):
                    yi = y[idx[start + order[i]]]
                    if yi == 0:
                        l0 += 1
                    elif yi == 1:
                        l1 += 1
                    elif yi == 2:
                        l2 += 1
                    else:
                        l3 += 1
                    vi = v[order[i]]
                    vn = v[order[i + 1]]
                    if vi == vn:
                        continue
                    nl = float(i + 1)
                    nr = nn - nl
                    r0 = c0 - l0; r1 = c1 - l1; r2 = c2 - l2; r3 = c3 - l3
                    gl = 1.0 - (l0 * l0 + l1 * l1 + l2 * l2 + l3 * l3) / (nl * nl)
                    gr = 1.0 - (r0 * r0 + r1 * r1 + r2 * r2 + r3 * r3) / (nr * nr)
                    cost = (nl * gl + nr * gr) / nn
                    if cost < best_cost:
                        best_cost = cost
                        best_f = f
                        best_thr = 0.5 * (vi + vn)

            if best_f < 0 or best_cost >= parent_gini - 1e-12:
                feature[node] = _LEAF
                label[node] = _majority4(c0, c1, c2, c3)
                continue

            # stable partition: left = value <= threshold
            nl_cnt = 0
            lc0 = 0; lc1 = 0; lc2 = 0; lc3 = 0
            for i in range(start, end):
                row = idx[i]
                if X[row, best_f] <= best_thr:
                    tmp[nl_cnt] = row
                    nl_cnt += 1
                    yi = y[row]
                    if yi == 0:
                        lc0 += 1
                    elif yi == 1:
                        lc1 += 1
                    elif yi == 2:
                        lc2 += 1
                    else:
                        lc3 += 1
            nr_cnt = nl_cnt
            for i in range(start, end):
                if X[idx[i], best_f] > best_thr:
                    tmp[nr_cnt] = idx[i]
                    nr_cnt += 1
            for i in range(n_node):
                idx[start + i] = tmp[i]

            lchild = cursor
            rchild = cursor + 1
            cursor += 2
            feature[node] = best_f
            threshold[node] = best_thr
            left[node] = lchild
            right[node] = rchild
            label[node] = -1

            stack_start[sp] = start
            stack_end[sp] = start + nl_cnt
            stack_node[sp] = lchild
            stack_depth[sp] = depth + 1
            stack_c[sp, 0] = lc0; stack_c[sp, 1] = lc1
            stack_c[sp, 2] = lc2; stack_c[sp, 3] = lc3
            sp += 1
            stack_start[sp] = start + nl_cnt
            stack_end[sp] = end
            stack_node[sp] = rchild
            stack_depth[sp] = depth + 1
            stack_c[sp, 0] = c0 - lc0; stack_c[sp, 1] = c1 - lc1
            stack_c[sp, 2] = c2 - lc2; stack_c[sp, 3] = c3 - lc3
            sp += 1

    offsets[ntree] = cursor
    return (feature[:cursor].copy(), threshold[:cursor].copy(),
            left[:cursor].copy(), right[:cursor].copy(),
            label[:cursor].copy(), offsets, boot, oob_mask)


@njit(cache=True, inline="always")
def _majority4(c0, c1, c2, c3):
    best = c0
    lab = 0
    if c1 > best:
        best = c1; lab = 1
    if c2 > best:
        best = c2; lab = 2
    if c3 > best:
        best = c3; lab = 3
    return lab


@njit(cache=True, inline="always")
def _tree_predict_row(feature, threshold, left, right, label, root, X, r):
    node = root
    while feature[node] != _LEAF:
        if X[r, feature[node]] <= threshold[node]:
            node = left[node]
        else:
            node = right[node]
    return label[node]


@njit(cache=True)
def _vote_matrix(feature, threshold, left, right, label, offsets, X):
    n = X.shape[0]
    ntree = offsets.shape[0] - 1
    votes = np.zeros((n, 4), np.int64)
    for t in range(ntree):
        root = offsets[t]
        for r in range(n):
            votes[r, _tree_predict_row(feature, threshold, left, right, label, root, X, r)] += 1
    return votes


@njit(cache=True)
def _oob_vote_matrix(feature, threshold, left, right, label, offsets, oob_mask, X):
    n = X.shape[0]
    ntree = offsets.shape[0] - 1
    votes = np.zeros((n, 4), np.int64)
    for t in range(ntree):
        root = offsets[t]
        for r in range(n):
            if oob_mask[t, r]:
                votes[r, _tree_predict_row(feature, threshold, left, right, label, root, X, r)] += 1
    return votes


@njit(cache=True)
def _mda_kernel(feature, threshold, left, right, label, offsets, oob_mask,
                X, y, perm_seeds):
    n, p = X.shape
    ntree = offsets.shape[0] - 1
    diffs = np.zeros(p, np.float64)
    oob_idx = np.empty(n, np.int64)
    vbuf = np.empty(n, np.float64)
    base_wrong = np.empty(n, np.bool_)
    # first_node[i, j]: first node on row i's unperturbed path that tests
    # covariate j (-1 when the path never tests it); permuting j can only
    # change the prediction from that node on, so only that subtree is
    # re-walked
    first_node = np.empty((n, p), np.int64)
    for t in range(ntree):
        root = offsets[t]
        n_oob = 0
        for r in range(n):
            if oob_mask[t, r]:
                oob_idx[n_oob] = r
                n_oob += 1
        if n_oob == 0:
            continue
        for i in range(n_oob):
            r = oob_idx[i]
            for j in range(p):
                first_node[i, j] = -1
            node = root
            while feature[node] != _LEAF:
                f = feature[node]
                if first_node[i, f] < 0:
                    first_node[i, f] = node
                if X[r, f] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            base_wrong[i] = label[node] != y[r]
        for j in range(p):
            np.random.seed(perm_seeds[t, j])
            for i in range(n_oob):
                vbuf[i] = X[oob_idx[i], j]
            # Fisher-Yates shuffle of the OOB column values
            for i in range(n_oob - 1, 0, -1):
                k = np.random.randint(0, i + 1)
                vi = vbuf[i]; vbuf[i] = vbuf[k]; vbuf[k] = vi
            delta = 0
            for i in range(n_oob):
                node = first_node[i, j]
                if node < 0:
                    continue
                xj = vbuf[i]
                r = oob_idx[i]
                if xj == X[r, j]:
                    continue
                while feature[node] != _LEAF:
                    f = feature[node]
                    xv = xj if f == j else X[r, f]
                    if xv <= threshold[node]:
                        node = left[node]
                    else:
                        node = right[node]
                wrong = label[node] != y[r]
                if wrong and not base_wrong[i]:
                    delta += 1
                elif base_wrong[i] and not wrong:
                    delta -= 1
            diffs[j] += delta / n_oob
    return diffs / ntree


@dataclass(frozen=True)
class ForestConfig:
    """Forest hyperparameters; defaults follow common practice for p = 15."""

    ntree: int = 500
    mtry: int = 3
    min_node_size: int = 1
    max_depth: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.ntree < 1:
            raise ValueError("ntree must be >= 1")
        if self.mtry < 1:
            raise ValueError("mtry must be >= 1")


@dataclass
class ForestModel:
    """Grown forest stored as flat node arrays (one concatenated block).

    Tree t occupies nodes [offsets[t], offsets[t+1]); its root is
    offsets[t].  Internal nodes carry (feature, threshold, left, right);
    leaves have feature == -1 and a class label.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    label: np.ndarray
    offsets: np.ndarray
    bootstrap: np.ndarray   # (ntree, n) sampled row indices
    oob_mask: np.ndarray    # (ntree, n) True where row is out-of-bag
    config: ForestConfig
    covariate_names: tuple = ()

    @property
    def n_trees(self) -> int:
        return len(self.offsets) - 1

    @property
    def n_train(self) -> int:
        return self.bootstrap.shape[1]

    def tree_nodes(self, t: int) -> dict:
        """Local view of tree t (node ids rebased to 0), for inspection."""
        lo, hi = self.offsets[t], self.offsets[t + 1]
        rebase = lambda a: np.where(a[lo:hi] >= 0, a[lo:hi] - lo, a[lo:hi])
        return {
            "feature": self.feature[lo:hi].copy(),
            "threshold": self.threshold[lo:hi].copy(),
            "left": rebase(self.left),
            "right": rebase(self.right),
            "label": self.label[lo:hi].copy(),
        }


@dataclass
class ImportanceReport:
    """Permutation importance per covariate with across-run variability."""

    mda: np.ndarray
    sd: np.ndarray
    ranking: np.ndarray
    covariate_names: tuple = ()

    def as_dict(self) -> dict:
        names = self.covariate_names or tuple(f"x{j}" for j in range(len(self.mda)))
        return {
            "importance": [
                {"covariate": names[j], "mda": float(self.mda[j]), "sd": float(self.sd[j])}
                for j in range(len(self.mda))
            ],
            "ranking": [int(j) for j in self.ranking],
        }


@dataclass
class SelectionResult:
    """Outcome of the two-stage variable selection."""

    selected: list
    ranking: np.ndarray
    mean_mda: np.ndarray
    sd_mda: np.ndarray
    threshold: float
    retained: list
    stage2_oob: list
    empty: bool = False
    covariate_names: tuple = ()

    def as_dict(self) -> dict:
        names = self.covariate_names or tuple(f"x{j}" for j in range(len(self.mean_mda)))
        return {
            "selected": [{"index": int(j), "covariate": names[j]} for j in self.selected],
            "threshold": float(self.threshold),
            "importance": [
                {"covariate": names[j], "mean_mda": float(self.mean_mda[j]),
                 "sd": float(self.sd_mda[j]),
                 "selected": bool(j in self.selected)}
                for j in range(len(self.mean_mda))
            ],
            "stage2_oob": [float(e) for e in self.stage2_oob],
            "empty": self.empty,
        }


def _as_arrays(X, y):
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    if X.ndim != 2 or len(y) != X.shape[0]:
        raise ValueError("X must be (n, p) with matching y")
    return X, y


def grow_forest(X, y, config: ForestConfig = ForestConfig(), names=()) -> ForestModel:
    """Grow a forest of unpruned CART trees; deterministic given config.seed.

    Per-tree seeds are derived from (config.seed, tree index) through a
    dedicated counter-based stream, so growth order never matters.
    """
    X, y = _as_arrays(X, y)
    n, p = X.shape
    if n < 1:
        raise ValueError("need at least one observation")
    seeds = stream(config.seed, 0).integers(0, 2**31 - 1, config.ntree).astype(np.uint32)
    max_depth = -1 if config.max_depth is None else int(config.max_depth)
    is_binary = np.array([bool(np.isin(X[:, j], (0.0, 1.0)).all()) for j in range(p)])
    arrays = _grow_forest_kernel(
        X, y, seeds, int(min(config.mtry, p)), int(config.min_node_size), max_depth,
        is_binary)
    return ForestModel(*arrays, config=config, covariate_names=tuple(names))


def predict(model: ForestModel, X) -> np.ndarray:
    """Majority-vote class for each row of X; ties go to the lowest class."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    votes = _vote_matrix(model.feature, model.threshold, model.left, model.right,
                         model.label, model.offsets, X)
    pred = votes.argmax(axis=1)
    return int(pred[0]) if single else pred


def oob_error(model: ForestModel, X, y):
    """Out-of-bag misclassification rate via per-observation OOB majority vote.

    Observations that are in-bag for every tree are excluded; their count is
    returned alongside the rate as (error, n_excluded).
    """
    X, y = _as_arrays(X, y)
    votes = _oob_vote_matrix(model.feature, model.threshold, model.left, model.right,
                             model.label, model.offsets, model.oob_mask, X)
    covered = votes.sum(axis=1) > 0
    n_cov = int(covered.sum())
    if n_cov == 0:
        raise ValueError("no observation has an out-of-bag tree; increase ntree")
    pred = votes[covered].argmax(axis=1)
    err = float(np.mean(pred != y[covered]))
    return err, len(y) - n_cov


def mda_importance(model: ForestModel, X, y, seed: int = 0, n_rep: int = 1) -> ImportanceReport:
    """Mean decrease of accuracy: permute each covariate within every tree's
    OOB sample and average the OOB error increase over trees.

    ``n_rep`` repeats the whole permutation pass with fresh streams; the
    report's sd is taken across repetitions (zero when n_rep == 1).
    """
    X, y = _as_arrays(X, y)
    p = X.shape[1]
    runs = np.empty((n_rep, p))
    for rep in range(n_rep):
        perm_seeds = stream(seed, 1, rep).integers(
            0, 2**31 - 1, (model.n_trees, p)).astype(np.uint32)
        runs[rep] = _mda_kernel(model.feature, model.threshold, model.left,
                                model.right, model.label, model.offsets,
                                model.oob_mask, X, y, perm_seeds)
    mda = runs.mean(axis=0)
    sd = runs.std(axis=0, ddof=1) if n_rep > 1 else np.zeros(p)
    ranking = np.lexsort((np.arange(p), -mda))
    return ImportanceReport(mda, sd, ranking, tuple(model.covariate_names))


def vsurf_select(X, y, config: ForestConfig = ForestConfig(), n_forests: int = 25,
                 names=()) -> SelectionResult:
    """Two-stage variable selection.

    Stage 1: grow ``n_forests`` forests with distinct derived seeds, compute
    the across-forest mean and sd of each covariate's MDA, and eliminate
    covariates whose mean falls below the minimum of the sds.  Stage 2: for
    the nested sequence top-1, top-2, ... of retained covariates, grow one
    forest per model and keep the model with the smallest OOB error (ties go
    to the fewer covariates).
    """
    if n_forests < 2:
        raise ValueError("n_forests must be >= 2")
    X, y = _as_arrays(X, y)
    p = X.shape[1]
    all_mda = np.empty((n_forests, p))
    for f in range(n_forests):
        cfg = ForestConfig(config.ntree, config.mtry, config.min_node_size,
                           config.max_depth, stream(config.seed, 2, f).integers(2**31))
        model = grow_forest(X, y, cfg)
        all_mda[f] = mda_importance(model, X, y, seed=cfg.seed).mda
    mean_mda = all_mda.mean(axis=0)
    sd_mda = all_mda.std(axis=0, ddof=1)
    threshold = float(sd_mda.min())
    ranking = np.lexsort((np.arange(p), -mean_mda))
    retained = [int(j) for j in ranking if mean_mda[j] >= threshold]
    if not retained:
        return SelectionResult([], ranking, mean_mda, sd_mda, threshold, [],
                               [], empty=True, covariate_names=tuple(names))
    stage2_err = []
    for m in range(1, len(retained) + 1):
        cols = retained[:m]
        cfg = ForestConfig(config.ntree, min(config.mtry, m), config.min_node_size,
                           config.max_depth, stream(config.seed, 3, m).integers(2**31))
        model = grow_forest(np.ascontiguousarray(X[:, cols]), y, cfg)
        err, _ = oob_error(model, np.ascontiguousarray(X[:, cols]), y)
        stage2_err.append(err)
    best_m = 1 + int(np.argmin(stage2_err))   # argmin takes the first minimum
    return SelectionResult(
        selected=retained[:best_m],
        ranking=ranking,
        mean_mda=mean_mda,
        sd_mda=sd_mda,
        threshold=threshold,
        retained=retained,
        stage2_oob=stage2_err,
        covariate_names=tuple(names),
    )
