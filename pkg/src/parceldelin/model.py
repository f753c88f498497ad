"""U-Net variants for boundary/area segmentation.

Architecture: ``depth`` encoder blocks of two 3x3 convs (per-level dilation)
followed by 2x2 max pooling, a two-conv bottleneck, and symmetric decoder
blocks of nearest-neighbor upsampling, a 3x3 conv, skip concatenation and
two 3x3 convs.  A 1x1 conv plus sigmoid produces the per-pixel probability
map.  Filter counts double per level.

Pretrained variants keep every dilation at 1 and enable batchnorm so an
encoder weight file trained elsewhere can be imported; the spatio-temporal
pretrained variant prepends a learnable 1x1 conv mapping 9 input channels
onto the 3-channel body.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, FormatError, ShapeError
from .nn import (
    Parameter,
    RunningStats,
    Tensor,
    batchnorm2d,
    concat_channels,
    conv2d,
    maxpool2x,
    relu,
    sigmoid,
    upsample_nearest2x,
)
from .variants import ModelVariant
from .weights import read_weight_file, write_weight_file


@dataclass
class UNetConfig:
    in_channels: int = 3
    depth: int = 4
    base_filters: int = 16
    dilation_rates: tuple[int, ...] = (1, 2, 4, 8)
    use_batchnorm: bool = False
    size_px: int = 224

    def validate(self) -> None:
        if self.in_channels not in (3, 9):
            raise ConfigError(f"in_channels must be 3 or 9, got {self.in_channels}")
        if self.depth < 2:
            raise ConfigError(f"depth must be >= 2, got {self.depth}")
        if self.size_px % (1 << self.depth) != 0:
            raise ConfigError(
                f"size_px {self.size_px} not divisible by 2^depth = {1 << self.depth}"
            )
        if len(self.dilation_rates) != self.depth:
            raise ConfigError(
                f"dilation_rates has {len(self.dilation_rates)} entries for depth {self.depth}"
            )
        if any(d < 1 for d in self.dilation_rates):
            raise ConfigError(f"dilation rates must be >= 1, got {self.dilation_rates}")

    def to_dict(self) -> dict:
        return {
            "in_channels": self.in_channels,
            "depth": self.depth,
            "base_filters": self.base_filters,
            "dilation_rates": list(self.dilation_rates),
            "use_batchnorm": self.use_batchnorm,
            "size_px": self.size_px,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "UNetConfig":
        return cls(
            in_channels=d["in_channels"],
            depth=d["depth"],
            base_filters=d["base_filters"],
            dilation_rates=tuple(d["dilation_rates"]),
            use_batchnorm=d["use_batchnorm"],
            size_px=d["size_px"],
        )


def default_config(variant: ModelVariant, size_px: int = 224, depth: int = 4, base_filters: int = 16) -> UNetConfig:
    """Variant-appropriate config: dilated encoder from scratch, plain + BN when pretrained."""
    if variant.pretrained:
        rates = tuple(1 for _ in range(depth))
        use_bn = True
    else:
        rates = tuple(1 << i for i in range(depth))
        use_bn = False
    return UNetConfig(
        in_channels=variant.input_channels,
        depth=depth,
        base_filters=base_filters,
        dilation_rates=rates,
        use_batchnorm=use_bn,
        size_px=size_px,
    )


class _Conv:
    """Conv layer owning its weight/bias parameters (He-normal init, zero bias)."""

    def __init__(self, model: "UNet", name: str, cin: int, cout: int, k: int, dilation: int = 1):
        std = float(np.sqrt(2.0 / (cin * k * k)))
        self.w = Parameter(f"{name}.w", model._rng.normal(0.0, std, size=(cout, cin, k, k)).astype(np.float32))
        self.b = Parameter(f"{name}.b", np.zeros(cout, dtype=np.float32))
        self.dilation = dilation
        self.pad = dilation * (k - 1) // 2
        model._params += [self.w, self.b]

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.w, self.b, stride=1, pad=self.pad, dilation=self.dilation)


class _BatchNorm:
    def __init__(self, model: "UNet", name: str, channels: int):
        self.gamma = Parameter(f"{name}.gamma", np.ones(channels, dtype=np.float32))
        self.beta = Parameter(f"{name}.beta", np.zeros(channels, dtype=np.float32))
        self.running = RunningStats(channels)
        model._params += [self.gamma, self.beta]
        model._buffers[f"{name}.running_mean"] = (self.running, "mean")
        model._buffers[f"{name}.running_var"] = (self.running, "var")

    def __call__(self, x: Tensor, train: bool) -> Tensor:
        return batchnorm2d(x, self.gamma, self.beta, self.running, mode="train" if train else "eval")


class _ConvUnit:
    """conv3x3 -> (BN) -> relu"""

    def __init__(self, model: "UNet", name: str, cin: int, cout: int, dilation: int = 1):
        self.conv = _Conv(model, name, cin, cout, 3, dilation)
        self.bn = _BatchNorm(model, name.replace("conv", "bn"), cout) if model.config.use_batchnorm else None

    def __call__(self, x: Tensor, train: bool) -> Tensor:
        x = self.conv(x)
        if self.bn is not None:
            x = self.bn(x, train)
        return relu(x)


class UNet:
    """One segmentation network; task (boundary vs area) is a training choice."""

    def __init__(self, variant: ModelVariant, config: UNetConfig, init_seed: int = 0):
        config.validate()
        if config.in_channels != variant.input_channels:
            raise ConfigError(
                f"{variant.value} expects {variant.input_channels} input channels, config has {config.in_channels}"
            )
        if variant.pretrained and any(d != 1 for d in config.dilation_rates):
            raise ConfigError("pretrained variants require all dilation rates = 1")
        self.variant = variant
        self.config = config
        self._rng = np.random.default_rng(init_seed)
        self._params: list[Parameter] = []
        self._buffers: dict[str, tuple[RunningStats, str]] = {}

        base = config.base_filters
        body_in = 3 if variant is ModelVariant.SPATIOTEMPORAL_PRETRAINED else config.in_channels
        self.adapter = (
            _Conv(self, "adapter", 9, 3, 1)
            if variant is ModelVariant.SPATIOTEMPORAL_PRETRAINED
            else None
        )

        self.encoder = []
        cin = body_in
        for level in range(config.depth):
            cout = base << level
            d = config.dilation_rates[level]
            self.encoder.append(
                (
                    _ConvUnit(self, f"enc{level}.conv1", cin, cout, d),
                    _ConvUnit(self, f"enc{level}.conv2", cout, cout, d),
                )
            )
            cin = cout
        cbot = base << config.depth
        self.bottleneck = (
            _ConvUnit(self, "bott.conv1", cin, cbot),
            _ConvUnit(self, "bott.conv2", cbot, cbot),
        )
        self.decoder = []
        cin = cbot
        for level in reversed(range(config.depth)):
            cout = base << level
            self.decoder.append(
                (
                    _ConvUnit(self, f"dec{level}.upconv", cin, cout),
                    _ConvUnit(self, f"dec{level}.conv1", 2 * cout, cout),
                    _ConvUnit(self, f"dec{level}.conv2", cout, cout),
                )
            )
            cin = cout
        self.head = _Conv(self, "head", base, 1, 1)
        names = [p.name for p in self._params]
        assert len(names) == len(set(names))

    def parameters(self) -> list[Parameter]:
        return list(self._params)

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self._params)

    def forward(self, x, train: bool = False) -> Tensor:
        """(N, in_channels, H, W) -> probability map (N, 1, H, W) in (0, 1)."""
        t = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float32))
        if t.data.ndim != 4 or t.shape[1] != self.config.in_channels:
            raise ShapeError(f"expected (N, {self.config.in_channels}, H, W), got {t.shape}")
        if t.shape[2] % (1 << self.config.depth) or t.shape[3] % (1 << self.config.depth):
            raise ShapeError(
                f"spatial dims {t.shape[2:]} not divisible by 2^depth = {1 << self.config.depth}"
            )
        if self.adapter is not None:
            t = self.adapter(t)
        skips = []
        for unit1, unit2 in self.encoder:
            t = unit2(unit1(t, train), train)
            skips.append(t)
            t, _ = maxpool2x(t)
        t = self.bottleneck[1](self.bottleneck[0](t, train), train)
        for (upconv, conv_a, conv_b), skip in zip(self.decoder, reversed(skips)):
            t = upconv(upsample_nearest2x(t), train)
            if t.shape[2:] != skip.shape[2:]:
                raise ShapeError(f"skip size mismatch: {t.shape} vs {skip.shape}")
            t = concat_channels(skip, t)
            t = conv_b(conv_a(t, train), train)
        return sigmoid(self.head(t))

    def state_entries(self) -> dict[str, np.ndarray]:
        """Parameters plus batchnorm running buffers, in creation order."""
        entries: dict[str, np.ndarray] = {p.name: p.data for p in self._params}
        for name, (running, attr) in self._buffers.items():
            entries[name] = getattr(running, attr)
        return entries


@dataclass
class LoadReport:
    """Outcome of a (possibly partial) weight import."""

    loaded: list[str] = field(default_factory=list)
    missing: list[str] = field(default_factory=list)  # model entries absent from the file
    unused: list[str] = field(default_factory=list)  # file entries not in the model


def build(variant: ModelVariant, config: UNetConfig | None = None, init_seed: int = 0, **kwargs) -> UNet:
    """Construct a variant with its default (or given) configuration."""
    if config is None:
        config = default_config(variant, **kwargs)
    return UNet(variant, config, init_seed)


def save_weights(model: UNet, path) -> None:
    write_weight_file(path, model.state_entries())


def load_weights(model: UNet, path, allow_partial: bool = False) -> LoadReport:
    """Copy file entries into matching model entries by name.

    Without ``allow_partial`` every model entry must be present and no file
    entry may be left over; with it, mismatched names are only reported.
    Shape conflicts are always errors.
    """
    return load_state(model, read_weight_file(path), allow_partial)


def load_state(model: UNet, file_entries: dict[str, np.ndarray], allow_partial: bool = False) -> LoadReport:
    report = LoadReport()
    params = {p.name: p for p in model._params}
    model_names = list(params) + list(model._buffers)
    report.missing = [n for n in model_names if n not in file_entries]
    report.unused = [n for n in file_entries if n not in set(model_names)]
    if not allow_partial and (report.missing or report.unused):
        detail = []
        if report.missing:
            detail.append(f"missing from file: {sorted(report.missing)}")
        if report.unused:
            detail.append(f"unknown entries in file: {sorted(report.unused)}")
        raise FormatError("weight file does not match model (" + "; ".join(detail) + ")")

    for name, arr in file_entries.items():
        if name in params:
            p = params[name]
            if p.data.shape != arr.shape:
                raise ShapeError(
                    f"weight entry {name!r} has shape {arr.shape}, parameter expects {p.data.shape}"
                )
            p.data = arr.astype(p.data.dtype)
        elif name in model._buffers:
            running, attr = model._buffers[name]
            current = getattr(running, attr)
            if current.shape != arr.shape:
                raise ShapeError(
                    f"weight entry {name!r} has shape {arr.shape}, buffer expects {current.shape}"
                )
            setattr(running, attr, arr.astype(current.dtype))
        else:
            continue
        report.loaded.append(name)
    return report
