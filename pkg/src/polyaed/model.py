"""Shared-backbone multi-task network with attention masks, plus the
multi-label CRNN baseline.

The backbone is five convolution blocks (two 3x3 conv stacks and a 1x2
frequency max-pool each) whose two conv outputs fan out read-only to every
task subnet. A task subnet mirrors those five levels: it derives a
time-frequency mask and a channel mask from the first conv map, applies both
to the second conv map, reduces the doubled channels with a 1x1 convolution,
concatenates its previous level's output, refines with its own 3x3 conv
stack, and pools. A bidirectional GRU and two ReLU dense layers feed each
task's per-frame softmax; the baseline runs the same backbone into a single
sigmoid head over all categories.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .labelspace import TaskDecomposition, decode_predictions
from .ops import BatchNormState, GruDirection, GruParams
from .tensor import DTYPES, Tensor, concat, mean_axes, max_axis, mul, reshape

GRU_KEYS = ("wz", "wr", "wh", "uz", "ur", "uh", "bz", "br", "bh")


@dataclass(frozen=True)
class ModelConfig:
    kind: str  # "multitask" | "baseline"
    categories: tuple[str, ...]
    groups: tuple[tuple[int, ...], ...] | None = None
    filters: tuple[int, ...] = (64, 64, 128, 128, 256)
    mel_bins: int = 64
    gru_hidden: int = 256
    fc_units: int = 512
    dropout: float = 0.25
    precision: str = "fast"
    threshold: float = 0.5

    def __post_init__(self):
        if self.kind not in ("multitask", "baseline"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.precision not in DTYPES:
            raise ValueError(f"precision must be one of {sorted(DTYPES)}, got {self.precision!r}")
        depth = len(self.filters)
        if self.mel_bins % (1 << depth) != 0:
            raise ValueError(
                f"{self.mel_bins} mel bins cannot survive {depth} frequency halvings"
            )
        for c in self.filters:
            if c % 2 != 0:
                raise ValueError(f"filter counts must be even for channel squeezing, got {c}")
        if self.kind == "multitask":
            if not self.groups:
                raise ValueError("multitask model needs a task decomposition")
            TaskDecomposition(groups=self.groups, num_categories=len(self.categories))
        elif self.groups:
            raise ValueError("baseline model takes no task decomposition")

    @property
    def dtype(self):
        return DTYPES[self.precision]

    @property
    def decomposition(self) -> TaskDecomposition:
        return TaskDecomposition(groups=self.groups, num_categories=len(self.categories))

    @property
    def head_input_width(self) -> int:
        return (self.mel_bins >> len(self.filters)) * self.filters[-1]


@dataclass
class Model:
    config: ModelConfig
    params: dict[str, Tensor]
    bn: dict[str, BatchNormState]
    stats: object = None  # FeatureStats once training data has been seen
    dropout_rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))

    def parameters(self):
        return list(self.params.values())


def _uniform(rng, shape, fan_in, dtype):
    limit = np.sqrt(1.0 / fan_in)
    return Tensor(rng.uniform(-limit, limit, size=shape).astype(dtype))


def _init_conv(params, rng, name, kh, kw, cin, cout, dtype):
    params[f"{name}/w"] = _uniform(rng, (kh, kw, cin, cout), kh * kw * cin, dtype)
    params[f"{name}/b"] = Tensor(np.zeros(cout, dtype=dtype))


def _init_bn(params, bn, name, channels, dtype):
    params[f"{name}/gamma"] = Tensor(np.ones(channels, dtype=dtype))
    params[f"{name}/beta"] = Tensor(np.zeros(channels, dtype=dtype))
    bn[name] = BatchNormState(channels, dtype)


def _init_dense(params, rng, name, din, dout, dtype):
    params[f"{name}/w"] = _uniform(rng, (din, dout), din, dtype)
    params[f"{name}/b"] = Tensor(np.zeros(dout, dtype=dtype))


def _init_gru(params, rng, name, din, hidden, dtype):
    for d in ("fw", "bw"):
        for k in ("wz", "wr", "wh"):
            params[f"{name}/{d}/{k}"] = _uniform(rng, (din, hidden), din, dtype)
        for k in ("uz", "ur", "uh"):
            params[f"{name}/{d}/{k}"] = _uniform(rng, (hidden, hidden), hidden, dtype)
        for k in ("bz", "br", "bh"):
            params[f"{name}/{d}/{k}"] = Tensor(np.zeros(hidden, dtype=dtype))


def _init_head(params, rng, prefix, din, out_units, cfg):
    _init_gru(params, rng, f"{prefix}/gru", din, cfg.gru_hidden, cfg.dtype)
    _init_dense(params, rng, f"{prefix}/fc1", 2 * cfg.gru_hidden, cfg.fc_units, cfg.dtype)
    _init_dense(params, rng, f"{prefix}/fc2", cfg.fc_units, cfg.fc_units, cfg.dtype)
    _init_dense(params, rng, f"{prefix}/out", cfg.fc_units, out_units, cfg.dtype)


def build_model(config: ModelConfig, seed: int) -> Model:
    """Create a model with seeded uniform fan-in initialization, biases zero."""
    rng = np.random.default_rng([seed, 0xA11])
    params: dict[str, Tensor] = {}
    bn: dict[str, BatchNormState] = {}
    dtype = config.dtype
    cin = 1
    for i, cout in enumerate(config.filters, start=1):
        base = f"backbone/block{i}"
        _init_conv(params, rng, f"{base}/conv1", 3, 3, cin, cout, dtype)
        _init_bn(params, bn, f"{base}/bn1", cout, dtype)
        _init_conv(params, rng, f"{base}/conv2", 3, 3, cout, cout, dtype)
        _init_bn(params, bn, f"{base}/bn2", cout, dtype)
        cin = cout
    if config.kind == "multitask":
        counts = [1 << len(g) for g in config.groups]
        for n, k_classes in enumerate(counts, start=1):
            prev_c = 0
            for i, c in enumerate(config.filters, start=1):
                base = f"task{n}/level{i}"
                _init_conv(params, rng, f"{base}/tf", 1, 1, 2, 1, dtype)
                _init_conv(params, rng, f"{base}/ca1", 1, 1, c, c // 2, dtype)
                _init_conv(params, rng, f"{base}/ca2", 1, 1, c // 2, c, dtype)
                _init_conv(params, rng, f"{base}/reduce", 1, 1, 2 * c, c, dtype)
                _init_conv(params, rng, f"{base}/conv", 3, 3, c + prev_c, c, dtype)
                _init_bn(params, bn, f"{base}/bn", c, dtype)
                prev_c = c
            _init_head(params, rng, f"task{n}/head", config.head_input_width, k_classes, config)
    else:
        _init_head(params, rng, "baseline/head", config.head_input_width, len(config.categories), config)
    return Model(config=config, params=params, bn=bn, dropout_rng=np.random.default_rng([seed, 0xD20]))


def _conv_stack(tape, x, model, conv_name, bn_name, mode):
    p = model.params
    y = ops.conv2d(tape, x, p[f"{conv_name}/w"], p[f"{conv_name}/b"])
    y = ops.batch_norm(tape, y, p[f"{bn_name}/gamma"], p[f"{bn_name}/beta"], model.bn[bn_name], mode)
    y = ops.relu(tape, y)
    if mode == "train":
        y = ops.dropout(tape, y, model.config.dropout, model.dropout_rng)
    return y


def conv_block_forward(tape, x: Tensor, model: Model, block: int, mode: str):
    """One backbone block: two conv stacks then the frequency pool."""
    base = f"backbone/block{block}"
    m1 = _conv_stack(tape, x, model, f"{base}/conv1", f"{base}/bn1", mode)
    m2 = _conv_stack(tape, m1, model, f"{base}/conv2", f"{base}/bn2", mode)
    return m1, m2, ops.pool_freq_max(tape, m2)


def tf_attention(tape, m1: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Time-frequency mask from channel-pooled statistics of the first conv map."""
    pooled = concat(tape, [mean_axes(tape, m1, (2,)), max_axis(tape, m1, 2)], axis=2)
    return ops.sigmoid(tape, ops.conv2d(tape, pooled, w, b))


def channel_attention(tape, m1: Tensor, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor) -> Tensor:
    """Channel mask: squeeze the globally pooled channels to half, excite back."""
    channels = m1.data.shape[2]
    if channels % 2 != 0:
        raise ValueError(f"channel attention needs an even channel count, got {channels}")
    squeezed = ops.relu(tape, ops.conv2d(tape, mean_axes(tape, m1, (0, 1)), w1, b1))
    return ops.sigmoid(tape, ops.conv2d(tape, squeezed, w2, b2))


def combine_masked(tape, m_tf: Tensor, m_c: Tensor, m2: Tensor) -> Tensor:
    """Apply both masks to the second conv map and stack along channels (2C')."""
    return concat(tape, [mul(tape, m_tf, m2), mul(tape, m_c, m2)], axis=2)


def fuse_task_features(tape, m_tf, m_c, m2, prev, model: Model, task: int, level: int, mode: str) -> Tensor:
    """Masked features -> 1x1 reduction -> concat with the previous level ->
    3x3 conv stack -> frequency pool."""
    base = f"task{task}/level{level}"
    p = model.params
    masked = combine_masked(tape, m_tf, m_c, m2)
    reduced = ops.conv2d(tape, masked, p[f"{base}/reduce/w"], p[f"{base}/reduce/b"])
    if prev is not None:
        if prev.data.shape[:2] != reduced.data.shape[:2]:
            raise ValueError(
                f"previous level output {prev.data.shape[:2]} does not align with "
                f"current level {reduced.data.shape[:2]}"
            )
        reduced = concat(tape, [reduced, prev], axis=2)
    refined = _conv_stack(tape, reduced, model, f"{base}/conv", f"{base}/bn", mode)
    return ops.pool_freq_max(tape, refined)


def _gru_params(model: Model, prefix: str) -> GruParams:
    p = model.params
    return GruParams(
        fw=GruDirection(**{k: p[f"{prefix}/fw/{k}"] for k in GRU_KEYS}),
        bw=GruDirection(**{k: p[f"{prefix}/bw/{k}"] for k in GRU_KEYS}),
    )


def task_head(tape, x: Tensor, model: Model, prefix: str, mode: str, activation: str) -> Tensor:
    """BiGRU over frames, two ReLU dense layers, then the per-frame output layer."""
    p = model.params
    cfg = model.config
    y = ops.gru_bidirectional(tape, x, _gru_params(model, f"{prefix}/gru"), cfg.gru_hidden)
    if mode == "train":
        y = ops.dropout(tape, y, cfg.dropout, model.dropout_rng)
    for fc in ("fc1", "fc2"):
        y = ops.relu(tape, ops.dense(tape, y, p[f"{prefix}/{fc}/w"], p[f"{prefix}/{fc}/b"]))
        if mode == "train":
            y = ops.dropout(tape, y, cfg.dropout, model.dropout_rng)
    logits = ops.dense(tape, y, p[f"{prefix}/out/w"], p[f"{prefix}/out/b"])
    if activation == "softmax":
        if logits.data.shape[1] < 2:
            raise ValueError(f"softmax head needs at least 2 classes, got {logits.data.shape[1]}")
        return ops.softmax_last(tape, logits)
    return ops.sigmoid(tape, logits)


def _check_input(segment, model: Model) -> Tensor:
    data = segment.data if isinstance(segment, Tensor) else np.asarray(segment)
    if data.ndim != 2 or data.shape[1] != model.config.mel_bins:
        raise ValueError(
            f"segment must be (T,{model.config.mel_bins}), got {data.shape}"
        )
    return Tensor(data[:, :, None].astype(model.config.dtype))


def run_backbone(tape, segment, model: Model, mode: str, internals: dict | None = None):
    """The shared stack alone: per-level (m1, m2) pairs plus the final pooled map.

    Task subnets read these activations without writing into them, so callers
    may fan several subnets out over one backbone pass.
    """
    x = _check_input(segment, model)
    levels = []
    cur = x
    for i in range(1, len(model.config.filters) + 1):
        m1, m2, pooled = conv_block_forward(tape, cur, model, i, mode)
        levels.append((m1, m2))
        cur = pooled
        if internals is not None:
            internals.setdefault("backbone", []).append((m1, m2, pooled))
    return levels, cur


def run_task_subnet(tape, levels, model: Model, task: int, mode: str,
                    internals: dict | None = None) -> Tensor:
    """One task's attention blocks and head over precomputed backbone levels."""
    prev = None
    p = model.params
    for i, (m1, m2) in enumerate(levels, start=1):
        base = f"task{task}/level{i}"
        m_tf = tf_attention(tape, m1, p[f"{base}/tf/w"], p[f"{base}/tf/b"])
        m_c = channel_attention(
            tape, m1, p[f"{base}/ca1/w"], p[f"{base}/ca1/b"], p[f"{base}/ca2/w"], p[f"{base}/ca2/b"]
        )
        if internals is not None:
            internals.setdefault("masks", {})[(task, i)] = (m_tf, m_c)
        prev = fuse_task_features(tape, m_tf, m_c, m2, prev, model, task, i, mode)
    flat = reshape(tape, prev, (prev.data.shape[0], -1))
    return task_head(tape, flat, model, f"task{task}/head", mode, "softmax")


def forward_multitask(tape, segment, model: Model, mode: str, internals: dict | None = None):
    """Run the backbone once and every task subnet over it; one (T,K_i) row
    distribution per task."""
    if model.config.kind != "multitask":
        raise ValueError("model was built as a baseline; use forward_baseline")
    levels, _ = run_backbone(tape, segment, model, mode, internals)
    return [
        run_task_subnet(tape, levels, model, n, mode, internals)
        for n in range(1, len(model.config.groups) + 1)
    ]


def forward_baseline(tape, segment, model: Model, mode: str, internals: dict | None = None) -> Tensor:
    """Backbone into one sigmoid head: independent per-frame category scores."""
    if model.config.kind != "baseline":
        raise ValueError("model was built as multitask; use forward_multitask")
    _, pooled = run_backbone(tape, segment, model, mode, internals)
    flat = reshape(tape, pooled, (pooled.data.shape[0], -1))
    return task_head(tape, flat, model, "baseline/head", mode, "sigmoid")


def predict_events(outputs, decomp: TaskDecomposition | None = None, threshold: float = 0.5) -> np.ndarray:
    """Binary (T,Y) decisions: per-task argmax decoded through the label codec
    for the multitask path, sigmoid thresholding for the baseline."""
    if isinstance(outputs, (list, tuple)):
        if decomp is None:
            raise ValueError("multitask predictions need the task decomposition")
        indices = np.stack([o.data.argmax(axis=1) for o in outputs], axis=1)
        return decode_predictions(indices, decomp)
    data = outputs.data if isinstance(outputs, Tensor) else np.asarray(outputs)
    return (data >= threshold).astype(np.int64)


def forward(tape, segment, model: Model, mode: str, internals: dict | None = None):
    """Dispatch on the configured model kind."""
    if model.config.kind == "multitask":
        return forward_multitask(tape, segment, model, mode, internals)
    return forward_baseline(tape, segment, model, mode, internals)


def predict_segment(model: Model, segment) -> np.ndarray:
    """Inference-mode forward plus decision rule for one segment."""
    if model.config.kind == "multitask":
        outs = forward_multitask(None, segment, model, "infer")
        return predict_events(outs, decomp=model.config.decomposition)
    out = forward_baseline(None, segment, model, "infer")
    return predict_events(out, threshold=model.config.threshold)
