"""End-to-end refinement: superpixels, pooling, graph, CRF, labels, metrics."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .core import InvariantError, LabelMap, SuperpixelFeatures, SuperpixelMap, validate_partition
from .crf import CrfModel, CrfParams, KernelParams, MeanFieldResult, build_model, mean_field_infer, unary_energy
from .learn import LinearModel, TrainConfig
from .metrics import DEFAULT_IOU_THRESHOLDS, evaluate
from .simgraph import DEFAULT_TOP_K, EdgeList, build_edges, fit_same_label, similarity_matrix
from .slic import SlicParams, _to_lab, slic_segment
from .sppool import ReceptiveFieldGrid, pool_superpixels

UNARY_SUM_TOLERANCE = 1e-3

# same-label prior used when pseudo-labels give only one class: far apart or
# dissimilar pairs are unlikely to share a label
FALLBACK_CLASSIFIER = LinearModel(np.array([[-1.0, -4.0, -1.0, 2.0]]))


class StageError(Exception):
    """A pipeline stage rejected its input. ``str()`` is ``"<stage>: <cause>"``."""

    def __init__(self, stage: str, cause: str):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PipelineConfig:
    superpixel_size: float = 64.0  # target pixels per superpixel when target_count is unset
    target_count: int | None = None
    compactness: float = 10.0
    slic_iterations: int = 10
    stride: float = 1.0
    stride2: float = 1.0
    alpha_u: float = 1.0
    epsilon: float = 1e-8
    terms: list = field(default_factory=lambda: [KernelParams()])
    top_k: int = DEFAULT_TOP_K
    dense: bool = False
    iters: int = 10
    tol: float = 1e-6
    num_labels: int | None = None
    iou_thresholds: tuple = DEFAULT_IOU_THRESHOLDS
    classifier: TrainConfig = field(default_factory=lambda: TrainConfig(steps=300))

    def __post_init__(self):
        self.terms = [t if isinstance(t, KernelParams) else KernelParams(**t) for t in self.terms]
        if isinstance(self.classifier, dict):
            self.classifier = TrainConfig(**self.classifier)
        self.iou_thresholds = tuple(float(t) for t in self.iou_thresholds)
        if self.superpixel_size <= 0:
            raise ValueError("superpixel_size must be positive")
        if self.top_k < 1:
            raise ValueError("top_k must be positive")
        if self.iters < 1 or self.tol <= 0:
            raise ValueError("iters must be positive and tol positive")
        if not self.terms:
            raise ValueError("need at least one pairwise term")
        # surfaces invalid values early
        self.crf_params()
        ReceptiveFieldGrid(self.stride)
        ReceptiveFieldGrid(self.stride2)

    def crf_params(self) -> CrfParams:
        return CrfParams(self.alpha_u, self.epsilon, tuple(self.terms))

    def slic_params(self, rows: int, cols: int) -> SlicParams:
        k = self.target_count
        if k is None:
            k = max(1, int(round(rows * cols / self.superpixel_size)))
        return SlicParams(k, self.compactness, self.slic_iterations)

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["iou_thresholds"] = list(self.iou_thresholds)
        return d


@dataclass
class RefineResult:
    superpixels: SuperpixelMap
    features: list[SuperpixelFeatures]
    probs: np.ndarray  # (N_sp, L) mean probability per superpixel
    edges: EdgeList
    model: CrfModel
    inference: MeanFieldResult
    labels: np.ndarray  # per superpixel
    label_map: LabelMap
    baseline: LabelMap  # per-pixel argmax of the unary
    metrics: dict = field(default_factory=dict)


def check_unary(unary) -> np.ndarray:
    """Validate an (L, rows, cols) probability tensor and renormalise it.

    Pixel sums off by more than ``UNARY_SUM_TOLERANCE`` are rejected.
    """
    u = np.asarray(unary, dtype=np.float64)
    if u.ndim != 3 or u.shape[0] < 1:
        raise ValueError(f"unary must be (labels, rows, cols), got shape {u.shape}")
    if not np.all(np.isfinite(u)) or u.min() < 0:
        raise ValueError("unary must hold finite non-negative probabilities")
    s = u.sum(axis=0)
    worst = float(np.max(np.abs(s - 1.0)))
    if worst > UNARY_SUM_TOLERANCE:
        raise ValueError(f"unary probabilities sum to 1 +- {worst:.3g} (tolerance {UNARY_SUM_TOLERANCE})")
    return u / s


def image_features(image) -> np.ndarray:
    """CIELAB colour as a (3, rows, cols) feature map; the default appearance features."""
    return np.moveaxis(_to_lab(image), -1, 0)


def superpixel_groups(sp: SuperpixelMap, instance_mask) -> np.ndarray:
    """Instance id per superpixel (majority vote over its pixels)."""
    inst = np.asarray(instance_mask, dtype=np.int64)
    if inst.shape != sp.shape:
        raise ValueError(f"instance map {inst.shape} does not match image {sp.shape}")
    n_inst = int(inst.max()) + 1
    votes = np.zeros((sp.count, n_inst), dtype=np.int64)
    np.add.at(votes, (sp.ids.ravel(), inst.ravel()), 1)
    return votes.argmax(axis=1)


def refine(image, unary, config: PipelineConfig = PipelineConfig(), features=None,
           features2=None, instance_map=None, superpixels: SuperpixelMap | None = None,
           edges: EdgeList | None = None) -> RefineResult:
    """Run superpixel CRF refinement on one image.

    Parameters
    ----------
    image : (rows, cols, 3) uint8
    unary : (L, rows, cols) per-pixel label probabilities
    features, features2 : (K, M', N') feature maps for the two pairwise
        slots, on grids of stride ``config.stride`` / ``config.stride2``.
        ``features`` defaults to the image colour; ``features2`` is optional.
    instance_map : (rows, cols) int, optional
        Instance id per pixel. Superpixels are clipped to instances and graph
        edges never cross them.
    superpixels, edges : optional precomputed stages.

    Raises
    ------
    StageError
        With the failing stage name (``refine``, ``slic``, ``pool``, ``graph``
        or ``crf``) and the cause.
    """
    image = np.asarray(image)
    try:
        if image.ndim != 3 or image.shape[2] != 3:
            raise ValueError(f"image must be (rows, cols, 3), got {image.shape}")
        u = check_unary(unary)
        if u.shape[1:] != image.shape[:2]:
            raise ValueError("shape mismatch")
        num_labels = config.num_labels or u.shape[0]
        if u.shape[0] != num_labels:
            raise ValueError(f"unary has {u.shape[0]} labels, config says {num_labels}")
    except ValueError as exc:
        raise StageError("refine", str(exc)) from exc
    rows, cols = image.shape[:2]

    try:
        if superpixels is None:
            sp = slic_segment(image, config.slic_params(rows, cols),
                              mask=instance_map)
        else:
            sp = superpixels
            if sp.shape != (rows, cols):
                raise ValueError(f"superpixel map {sp.shape} does not match image {(rows, cols)}")
    except ValueError as exc:
        raise StageError("slic", str(exc)) from exc
    ok, problems = validate_partition(sp)
    if not ok:
        if superpixels is not None:
            raise StageError("slic", f"invalid superpixel map: {problems[0]}")
        raise InvariantError(f"slic produced an invalid partition: {problems[0]}")

    try:
        feats = [pool_superpixels(image_features(image) if features is None else features,
                                  sp, ReceptiveFieldGrid(config.stride))]
        if features2 is not None:
            feats.append(pool_superpixels(features2, sp, ReceptiveFieldGrid(config.stride2)))
        probs = pool_superpixels(u, sp).features
    except ValueError as exc:
        raise StageError("pool", str(exc)) from exc

    try:
        groups = None if instance_map is None else superpixel_groups(sp, instance_map)
        if edges is None:
            edges = _select_edges(feats[0], probs, groups, config)
        else:
            edges.check_bounds(sp.count)
    except ValueError as exc:
        raise StageError("graph", str(exc)) from exc

    try:
        params = config.crf_params()
        psi = unary_energy(probs, feats[0].sizes, params)
        model = build_model(psi, edges, feats, params)
        result = mean_field_infer(model, config.iters, config.tol)
    except ValueError as exc:
        raise StageError("crf", str(exc)) from exc

    labels = result.labels
    return RefineResult(
        superpixels=sp,
        features=feats,
        probs=probs,
        edges=edges,
        model=model,
        inference=result,
        labels=labels,
        label_map=LabelMap(labels[sp.ids], num_labels),
        baseline=LabelMap(np.argmax(u, axis=0), num_labels),
    )


def _select_edges(spf: SuperpixelFeatures, probs, groups, config: PipelineConfig) -> EdgeList:
    if spf.count < 2:
        return EdgeList(np.zeros((0, 2)), np.zeros(0))
    # pseudo-labels from the unary train the same-label classifier
    pseudo = np.argmax(probs, axis=1)
    scaled = SuperpixelFeatures(_standardize(spf.features), spf.positions, spf.sizes, spf.shape)
    model = fit_same_label(scaled, pseudo, config.classifier) or FALLBACK_CLASSIFIER
    sim = similarity_matrix(scaled, model, groups)
    return build_edges(sim, groups, None if config.dense else config.top_k)


def _standardize(f):
    sd = f.std(axis=0)
    sd[sd == 0] = 1.0
    return (f - f.mean(axis=0)) / sd


def score(result: RefineResult, gt, config: PipelineConfig = PipelineConfig(),
          pred_instances=None, gt_instances=None) -> dict:
    """Baseline and refined metrics against a ground-truth label map."""
    gt = np.asarray(getattr(gt, "labels", gt))
    if gt.shape != result.label_map.shape:
        raise StageError("eval", f"ground truth {gt.shape} does not match {result.label_map.shape}")
    L = result.label_map.num_labels
    if gt.size and (gt.min() < 0 or gt.max() >= L):
        raise StageError("eval", f"ground-truth labels outside [0, {L})")
    refined = evaluate(result.label_map, gt, L, pred_instances, gt_instances, config.iou_thresholds)
    baseline = evaluate(result.baseline, gt, L)
    return {
        "baseline": baseline.to_dict(),
        "refined": refined.to_dict(),
        "miou_gain": refined.mean_iou - baseline.mean_iou,
    }


def summary(result: RefineResult) -> dict:
    inf = result.inference
    return {
        "num_superpixels": result.superpixels.count,
        "num_labels": result.label_map.num_labels,
        "num_edges": len(result.edges),
        "iterations": inf.iterations,
        "converged": inf.converged,
        "free_energy": [float(v) for v in inf.free_energy],
    }
