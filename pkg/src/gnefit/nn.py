"""Feed-forward networks stored as flat parameter vectors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad

ACTIVATIONS = {
    "relu": ad.relu,
    "leaky_relu": ad.leaky_relu,
    "tanh": ad.tanh,
    "swish": ad.swish,
}

MODEL_MAGIC = "MPFIT-MODEL v1"


@dataclass(frozen=True)
class MlpArchitecture:
    input_dim: int
    hidden_sizes: tuple = ()
    output_dim: int = 1
    activation: str = "relu"
    linear_bypass: bool = False

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if self.input_dim < 1 or self.output_dim < 1 or any(h < 1 for h in self.hidden_sizes):
            raise ValueError(f"all layer sizes must be >= 1, got {self}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    def array_shapes(self):
        """Ordered (name, shape) pairs making up the flat parameter vector."""
        sizes = (self.input_dim, *self.hidden_sizes, self.output_dim)
        shapes = []
        for layer, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            shapes.append((f"W{layer}", (fan_in, fan_out)))
            shapes.append((f"b{layer}", (fan_out,)))
        if self.linear_bypass:
            shapes.append(("C", (self.input_dim, self.output_dim)))
            shapes.append(("d", (self.output_dim,)))
        return shapes

    @property
    def n_params(self):
        return sum(int(np.prod(s)) for _, s in self.array_shapes())

    def descriptor(self):
        hidden = ",".join(str(h) for h in self.hidden_sizes) or "-"
        return (f"input_dim={self.input_dim} hidden={hidden} output_dim={self.output_dim} "
                f"activation={self.activation} bypass={int(self.linear_bypass)}")

    @classmethod
    def from_descriptor(cls, fields):
        hidden = fields["hidden"]
        return cls(
            input_dim=int(fields["input_dim"]),
            hidden_sizes=() if hidden == "-" else tuple(int(h) for h in hidden.split(",")),
            output_dim=int(fields["output_dim"]),
            activation=fields["activation"],
            linear_bypass=fields["bypass"] == "1",
        )


@dataclass(frozen=True)
class MlpParams:
    arch: MlpArchitecture
    theta: np.ndarray = field(repr=False)

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float).ravel()
        if theta.size != self.arch.n_params:
            raise ValueError(f"expected {self.arch.n_params} parameters, got {theta.size}")
        theta.flags.writeable = False
        object.__setattr__(self, "theta", theta)

    def arrays(self):
        return unflatten(self.arch, self.theta)

    @classmethod
    def from_arrays(cls, arch, arrays):
        return cls(arch, flatten(arch, arrays))

    def __eq__(self, other):
        return (isinstance(other, MlpParams) and self.arch == other.arch
                and np.array_equal(self.theta, other.theta))

    def __hash__(self):
        return hash((self.arch, self.theta.tobytes()))


def unflatten(arch, theta):
    """Split a flat vector (array or Tensor) into named layer arrays."""
    out, offset = {}, 0
    for name, shape in arch.array_shapes():
        size = int(np.prod(shape))
        out[name] = ad.reshape(theta[offset:offset + size], shape)
        offset += size
    return out


def flatten(arch, arrays):
    return np.concatenate([np.asarray(arrays[name], dtype=float).ravel()
                           for name, _ in arch.array_shapes()])


def mlp_init(arch, seed):
    """Glorot-uniform weights, zero biases; deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, shape in arch.array_shapes():
        if len(shape) == 2:
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            arrays[name] = rng.uniform(-limit, limit, size=shape)
        else:
            arrays[name] = np.zeros(shape)
    return MlpParams.from_arrays(arch, arrays)


def mlp_apply(arch, theta, inputs):
    """Batched forward pass. ``inputs`` is (K, input_dim); ``theta`` may be traced."""
    layers = unflatten(arch, theta)
    act = ACTIVATIONS[arch.activation]
    n_hidden = len(arch.hidden_sizes)
    h = inputs
    for layer in range(n_hidden):
        h = act(h @ layers[f"W{layer}"] + layers[f"b{layer}"])
    out = h @ layers[f"W{n_hidden}"] + layers[f"b{n_hidden}"]
    if arch.linear_bypass:
        out = out + (inputs @ layers["C"] + layers["d"])
    return out


def mlp_forward(params, x):
    """Evaluate the network at one input vector or a (K, input_dim) batch."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    batch = x[None, :] if single else x
    if batch.shape[1] != params.arch.input_dim:
        raise ValueError(f"input has dimension {batch.shape[1]}, "
                         f"model expects {params.arch.input_dim}")
    out = mlp_apply(params.arch, params.theta, batch)
    return out[0] if single else out


def format_array_line(name, arr):
    arr = np.asarray(arr, dtype=float)
    shape = ",".join(str(s) for s in arr.shape) or "-"
    vals = " ".join(format(float(v), ".17g") for v in arr.ravel())
    return f"{name} {shape} {vals}".rstrip()


def parse_array_line(line):
    parts = line.split()
    name, shape_tok, vals = parts[0], parts[1], parts[2:]
    shape = () if shape_tok == "-" else tuple(int(s) for s in shape_tok.split(","))
    arr = np.array([float(v) for v in vals], dtype=float)
    if arr.size != int(np.prod(shape)):
        raise ValueError(f"array {name}: {arr.size} values for shape {shape}")
    return name, arr.reshape(shape)


def parse_fields(tokens):
    out = {}
    for tok in tokens:
        key, _, val = tok.partition("=")
        out[key] = val
    return out


def dumps_model(params, meta=None, extra_arrays=None):
    lines = [MODEL_MAGIC]
    desc = params.arch.descriptor()
    if meta:
        desc += " " + " ".join(f"{k}={v}" for k, v in meta.items())
    lines.append(desc)
    for name, arr in params.arrays().items():
        lines.append(format_array_line(name, arr))
    for name, arr in (extra_arrays or {}).items():
        lines.append(format_array_line(name, arr))
    return "\n".join(lines) + "\n"


def loads_model(text):
    """Inverse of :func:`dumps_model`; returns (params, meta, extra_arrays)."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != MODEL_MAGIC:
        raise ValueError("not a model file (bad header)")
    fields = parse_fields(lines[1].split())
    arch = MlpArchitecture.from_descriptor(fields)
    meta = {k: v for k, v in fields.items()
            if k not in ("input_dim", "hidden", "output_dim", "activation", "bypass")}
    arrays = dict(parse_array_line(ln) for ln in lines[2:])
    names = [n for n, _ in arch.array_shapes()]
    missing = [n for n in names if n not in arrays]
    if missing:
        raise ValueError(f"model file lacks arrays {missing}")
    params = MlpParams.from_arrays(arch, arrays)
    extra = {k: v for k, v in arrays.items() if k not in names}
    return params, meta, extra
