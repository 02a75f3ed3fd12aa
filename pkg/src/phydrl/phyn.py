"""Monomial input augmentation and knowledge-edited polynomial layers.

A PhyN layer maps ``y`` to ``K m + a * act((M * W) m)`` where ``m`` is the
monomial augmentation of ``y`` up to the layer's order. ``K`` carries known
weights, ``M`` masks them out of the trainable path, and ``a`` switches off
the activation on rows whose weights are fully known.

Monomials are stored as sorted tuples of variable indices (exponent
multisets): ``()`` is the constant, ``(0, 0, 2)`` is ``y0^2 y2``.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .errors import DimensionMismatch, IndexOutOfRange, InvalidOrder

ACTIVATIONS = ("relu", "tanh", "linear")


# --------------------------------------------------------------------------
# monomial bases


def _augment_order(n: int, r: int) -> list[tuple]:
    """Generation order of the augmentation loop.

    Degree-``k`` monomials are built from the degree-``k-1`` block: variable
    ``i`` multiplies the tail of that block starting at the first monomial
    whose smallest factor is ``>= i``. Tracking those start indices per
    variable is what keeps the list free of duplicates.
    """
    if r < 1:
        raise InvalidOrder(f"augmentation order must be >= 1, got {r}")
    if n < 1:
        raise DimensionMismatch("input must be nonempty")
    block = [(i,) for i in range(n)]
    start = list(range(n))
    out = [()] + block
    for _ in range(2, r + 1):
        new_block, new_start = [], []
        for i in range(n):
            new_start.append(len(new_block))
            new_block.extend((i,) + mono for mono in block[start[i]:])
        block, start = new_block, new_start
        out.extend(block)
    return out


@dataclass(frozen=True)
class MonomialBasis:
    input_dim: int
    order: int
    index_list: tuple

    @classmethod
    def full(cls, n: int, r: int) -> "MonomialBasis":
        return cls(n, r, tuple(_augment_order(n, r)))

    def __len__(self) -> int:
        return len(self.index_list)

    @property
    def exponents(self) -> np.ndarray:
        E = np.zeros((len(self), self.input_dim), dtype=int)
        for j, mono in enumerate(self.index_list):
            for k in mono:
                E[j, k] += 1
        return E

    @property
    def degrees(self) -> np.ndarray:
        return np.array([len(mono) for mono in self.index_list], dtype=int)

    def position(self, mono) -> int:
        return self.index_list.index(tuple(sorted(mono)))

    def evaluate(self, Y) -> np.ndarray:
        """Monomial values for a single input or a batch of row inputs."""
        Y = np.asarray(Y, dtype=float)
        if Y.shape[-1] != self.input_dim:
            raise DimensionMismatch(f"input has length {Y.shape[-1]}, basis expects {self.input_dim}")
        single = Y.ndim == 1
        Y = np.atleast_2d(Y)
        out = np.ones((Y.shape[0], len(self)))
        for j, mono in enumerate(self.index_list):
            for k in mono:
                out[:, j] *= Y[:, k]
        return out[0] if single else out


def augment(y, r: int) -> np.ndarray:
    """``[1; y; degree-2 monomials; ...; degree-r monomials]``."""
    y = np.asarray(y, dtype=float)
    return MonomialBasis.full(y.shape[-1], r).evaluate(y)


def even_monomial_basis(n: int, r: int) -> MonomialBasis:
    """Monomials of even total degree ``2, 4, ..., r`` (no constant, no odd terms)."""
    if r < 2 or r % 2:
        raise InvalidOrder(f"even basis needs an even order >= 2, got {r}")
    mono = [m for m in _augment_order(n, r) if len(m) >= 2 and len(m) % 2 == 0]
    return MonomialBasis(n, r, tuple(mono))


# --------------------------------------------------------------------------
# knowledge and layers


@dataclass(frozen=True)
class KnowledgeSet:
    """Known entries ``(row, column, value)`` of the first layer's weight matrix."""

    entries: tuple = ()

    def __post_init__(self):
        entries = tuple((int(i), int(j), float(v)) for i, j, v in self.entries)
        seen = set()
        for i, j, _ in entries:
            if (i, j) in seen:
                raise ValueError(f"duplicate knowledge entry ({i}, {j})")
            seen.add((i, j))
        object.__setattr__(self, "entries", entries)

    def __len__(self) -> int:
        return len(self.entries)

    def check_shape(self, rows: int, cols: int) -> None:
        for i, j, _ in self.entries:
            if not (0 <= i < rows and 0 <= j < cols):
                raise IndexOutOfRange(f"knowledge entry ({i}, {j}) outside {rows}x{cols}")


def _act(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    return z


def _act_grad(z, out, kind):
    if kind == "relu":
        return (z > 0.0).astype(float)
    if kind == "tanh":
        return 1.0 - out * out
    return np.ones_like(z)


@dataclass
class PhyNLayerSpec:
    basis: MonomialBasis
    K: np.ndarray
    M: np.ndarray
    a_mask: np.ndarray
    W: np.ndarray
    activation: str = "relu"
    _deriv: tuple = field(default=None, repr=False)

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        L = len(self.basis)
        for name in ("K", "M", "W"):
            if getattr(self, name).shape[1] != L:
                raise DimensionMismatch(f"{name} must have {L} columns")
        full = ~np.any(self.M != 0, axis=1)
        if np.any((self.a_mask == 0) & ~full):
            raise ValueError("activation masked on a row that still has trainable weights")

    @property
    def order(self) -> int:
        return self.basis.order

    @property
    def in_dim(self) -> int:
        return self.basis.input_dim

    @property
    def out_dim(self) -> int:
        return self.K.shape[0]

    @property
    def U(self) -> np.ndarray:
        return self.M * self.W

    def _derivative_table(self):
        # for each (monomial j, variable k) with nonzero exponent: coefficient
        # and the reduced monomial d m_j / d y_k = coef * prod(reduced)
        if self._deriv is None:
            js, ks, coefs, reduced = [], [], [], []
            for j, mono in enumerate(self.basis.index_list):
                for k in sorted(set(mono)):
                    rest = list(mono)
                    rest.remove(k)
                    js.append(j)
                    ks.append(k)
                    coefs.append(float(mono.count(k)))
                    reduced.append(tuple(rest))
            red_basis = MonomialBasis(self.in_dim, self.order, tuple(reduced))
            self._deriv = (np.array(js, dtype=int), np.array(ks, dtype=int),
                           np.array(coefs), red_basis)
        return self._deriv

    def forward_from_m(self, m):
        z = m @ self.U.T
        h = _act(z, self.activation)
        out = m @ self.K.T + self.a_mask * h
        return out, (m, z, h)

    def forward(self, y):
        m = self.basis.evaluate(np.atleast_2d(y))
        out, cache = self.forward_from_m(m)
        return out, (y, cache)

    def backward_to_m(self, cache, g_out):
        m, z, h = cache
        dz = g_out * self.a_mask * _act_grad(z, h, self.activation)
        gW = self.M * (dz.T @ m)
        gm = g_out @ self.K + dz @ self.U
        return gW, gm

    def backward(self, cache, g_out):
        y, inner = cache
        gW, gm = self.backward_to_m(inner, g_out)
        js, ks, coefs, red = self._derivative_table()
        y = np.atleast_2d(y)
        dm = coefs * red.evaluate(y)  # batch x entries
        contrib = gm[:, js] * dm
        gy = np.zeros_like(y)
        np.add.at(gy.T, ks, contrib.T)
        return gW, gy


@dataclass
class EditedNetwork:
    layers: list
    output_dim: int

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def params(self) -> list:
        return [layer.W for layer in self.layers]

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.input_dim:
            raise DimensionMismatch(f"input has length {x.shape[-1]}, network expects {self.input_dim}")
        h = np.atleast_2d(x)
        caches = []
        for layer in self.layers:
            h, c = layer.forward(h)
            caches.append(c)
        return h, caches

    def backward(self, caches, g_out):
        grads = [None] * len(self.layers)
        g = g_out
        for t in range(len(self.layers) - 1, -1, -1):
            grads[t], g = self.layers[t].backward(caches[t], g)
        return grads, g

    def __call__(self, x):
        out, _ = self.forward(x)
        return out[0] if np.ndim(x) == 1 else out

    def forward_from_m(self, m1):
        """Forward pass with the first layer's monomial vector given directly."""
        m1 = np.atleast_2d(m1)
        h, c0 = self.layers[0].forward_from_m(m1)
        caches = [c0]
        for layer in self.layers[1:]:
            h, c = layer.forward(h)
            caches.append(c)
        return h, caches

    def grad_wrt_m(self, m1, row: int) -> np.ndarray:
        """``d output[row] / d m1`` for each row of ``m1``."""
        out, caches = self.forward_from_m(m1)
        g = np.zeros_like(out)
        g[:, row] = 1.0
        for t in range(len(self.layers) - 1, 0, -1):
            _, g = self.layers[t].backward(caches[t], g)
        _, gm = self.layers[0].backward_to_m(caches[0], g)
        return gm

    def copy(self) -> "EditedNetwork":
        layers = [PhyNLayerSpec(l.basis, l.K.copy(), l.M.copy(), l.a_mask.copy(), l.W.copy(),
                                l.activation, l._deriv) for l in self.layers]
        return EditedNetwork(layers, self.output_dim)


def phyn_forward(net: EditedNetwork, x) -> np.ndarray:
    return net(x)


# --------------------------------------------------------------------------
# editing


def _he_init(rng, rows, cols, fan_in):
    return rng.normal(0.0, np.sqrt(2.0 / max(fan_in, 1)), size=(rows, cols))


def build_edit(knowledge: KnowledgeSet, layer_shapes, orders, output_dim: int,
               activations=None, rng=None) -> EditedNetwork:
    """Edit a cascade of PhyN layers so the output honours ``knowledge``.

    ``layer_shapes = [input_dim, w_1, ..., w_p]`` and ``orders = [r_1, ..., r_p]``.

    Layer 1 takes the known entries into ``K`` and masks them out of ``M``.
    Deeper layers pass the first ``output_dim`` coordinates straight through
    ``K`` and mask, in those rows, every monomial that structurally depends
    on a first-layer monomial that is known in the same row. Dependence is
    tracked conservatively: a coordinate depends on a first-layer monomial
    if any path through a nonzero ``K`` entry or an unmasked weight reaches it.
    """
    layer_shapes = [int(s) for s in layer_shapes]
    orders = [int(r) for r in orders]
    p = len(layer_shapes) - 1
    if len(orders) != p or p < 1:
        raise DimensionMismatch("need one order per layer")
    if activations is None:
        activations = ["relu"] * (p - 1) + ["linear"]
    if len(activations) != p:
        raise DimensionMismatch("need one activation per layer")
    if p > 1 and min(layer_shapes[1:]) < output_dim:
        raise DimensionMismatch("every layer must be at least output_dim wide to pass knowledge")
    if layer_shapes[-1] != output_dim:
        raise DimensionMismatch("last layer width must equal output_dim")
    rng = np.random.default_rng() if rng is None else rng

    n0 = layer_shapes[0]
    basis1 = MonomialBasis.full(n0, orders[0])
    L1, w1 = len(basis1), layer_shapes[1]
    knowledge.check_shape(w1, L1)
    K1 = np.zeros((w1, L1))
    M1 = np.ones((w1, L1))
    for i, j, v in knowledge.entries:
        K1[i, j] = v
        M1[i, j] = 0.0
    a1 = np.any(M1 != 0, axis=1).astype(float)
    W1 = _he_init(rng, w1, L1, L1)
    layers = [PhyNLayerSpec(basis1, K1, M1, a1, W1, activations[0])]

    # dependency sets: first-layer monomials each coordinate may vary with
    deps = [set(np.nonzero((K1[k] != 0) | ((M1[k] != 0) & (a1[k] != 0)))[0]) for k in range(w1)]
    known_cols = [set(np.nonzero(M1[i] == 0)[0]) for i in range(w1)]

    for t in range(1, p):
        n_in, w = layer_shapes[t], layer_shapes[t + 1]
        basis = MonomialBasis.full(n_in, orders[t])
        L = len(basis)
        mono_deps = [set().union(*(deps[k] for k in mono)) if mono else set()
                     for mono in basis.index_list]
        K = np.zeros((w, L))
        M = np.ones((w, L))
        for i in range(output_dim):
            K[i, basis.position((i,))] = 1.0
            if i < w1:
                for j, dj in enumerate(mono_deps):
                    if dj & known_cols[i]:
                        M[i, j] = 0.0
        a = np.ones(w)
        a[:output_dim] = a1[:output_dim]
        # a row with its activation switched off has no trainable path at all
        M[a == 0] = 0.0
        W = _he_init(rng, w, L, L)
        layer = PhyNLayerSpec(basis, K, M, a, W, activations[t])
        layers.append(layer)
        new_deps = []
        for k in range(w):
            live = (K[k] != 0) | ((M[k] != 0) & (a[k] != 0))
            new_deps.append(set().union(*(mono_deps[j] for j in np.nonzero(live)[0])))
        deps = new_deps
    return EditedNetwork(layers, output_dim)


def dense_phyn(layer_shapes, orders, activations=None, rng=None) -> EditedNetwork:
    return build_edit(KnowledgeSet(), layer_shapes, orders, layer_shapes[-1], activations, rng)


# --------------------------------------------------------------------------
# compliance and accounting


@dataclass
class ComplianceReport:
    max_deviation: float
    tol: float
    checked: int
    worst_entry: tuple | None = None

    @property
    def passed(self) -> bool:
        return self.max_deviation < self.tol


def compliance_check(net: EditedNetwork, knowledge: KnowledgeSet, points: int = 20,
                     redraws: int = 5, tol: float = 1e-7, rng=None,
                     scale: float = 1.0) -> ComplianceReport:
    """Check ``d out_i / d m_j == value`` for every known ``(i, j, value)``.

    Derivatives are taken by reverse mode at random monomial vectors under
    ``redraws`` fresh draws of every trainable weight matrix. Rows beyond the
    network's output width are checked on the first layer's output.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    if len(knowledge) == 0:
        return ComplianceReport(0.0, tol, 0)
    work = net.copy()
    L1 = len(work.layers[0].basis)
    worst, worst_entry, checked = 0.0, None, 0
    rows = sorted({i for i, _, _ in knowledge.entries})
    for _ in range(redraws):
        for layer in work.layers:
            layer.W = rng.normal(0.0, 1.0, size=layer.W.shape)
        x = rng.uniform(-scale, scale, size=(points, work.input_dim))
        m1 = work.layers[0].basis.evaluate(x)
        # perturb away from the exact monomial manifold as well
        m1 = m1 + rng.normal(0.0, 0.1, size=m1.shape)
        for i in rows:
            if i < work.output_dim:
                g = work.grad_wrt_m(m1, i)
            else:
                out, cache = work.layers[0].forward_from_m(m1)
                gout = np.zeros_like(out)
                gout[:, i] = 1.0
                _, g = work.layers[0].backward_to_m(cache, gout)
            for ii, j, v in knowledge.entries:
                if ii != i or j >= L1:
                    continue
                dev = float(np.max(np.abs(g[:, j] - v)))
                checked += 1
                if dev > worst:
                    worst, worst_entry = dev, (i, j)
    return ComplianceReport(worst, tol, checked, worst_entry)


@dataclass
class ParameterCount:
    layers: list  # (weights, biases) per layer

    @property
    def weights(self) -> int:
        return sum(w for w, _ in self.layers)

    @property
    def biases(self) -> int:
        return sum(b for _, b in self.layers)

    @property
    def total(self) -> int:
        return self.weights + self.biases


def count_parameters(net: EditedNetwork) -> ParameterCount:
    """Trainable entries per layer; the constant-monomial column counts as bias."""
    out = []
    for layer in net.layers:
        const = layer.basis.index_list.index(()) if () in layer.basis.index_list else None
        M = layer.M != 0
        b = int(M[:, const].sum()) if const is not None else 0
        out.append((int(M.sum()) - b, b))
    return ParameterCount(out)


def odd_zero_knowledge(basis: MonomialBasis, rows: int) -> KnowledgeSet:
    """Every odd-degree monomial has a known zero weight in every row."""
    odd = [j for j, mono in enumerate(basis.index_list) if len(mono) % 2 == 1]
    return KnowledgeSet(tuple((i, j, 0.0) for i in range(rows) for j in odd))


def knowledge_critic(width: int, input_dim: int = 18, rng=None) -> tuple[EditedNetwork, KnowledgeSet]:
    """Knowledge-edited critic of the KN-w family.

    Layer 1 works on the degree-2 augmentation of ``[observation; action]``
    with the odd (here: linear) monomials known to contribute nothing, so its
    trainable part is the even degree-2 basis plus the bias column. Layer 2
    re-augments at degree 2 with ``width`` units, and layer 3 is a linear
    readout.
    """
    basis = MonomialBasis.full(input_dim, 2)
    know = odd_zero_knowledge(basis, width)
    net = build_edit(know, [input_dim, width, width, 1], [2, 2, 1], 1,
                     ["relu", "relu", "linear"], rng)
    return net, know


# --------------------------------------------------------------------------
# spec files


def save_network_spec(path, layer_shapes, orders, activations, knowledge: KnowledgeSet,
                      output_dim: int) -> None:
    cp = configparser.ConfigParser()
    cp["network"] = {
        "layer_shapes": " ".join(str(s) for s in layer_shapes),
        "orders": " ".join(str(r) for r in orders),
        "activations": " ".join(activations),
        "output_dim": str(output_dim),
    }
    cp["knowledge"] = {f"{i},{j}": repr(v) for i, j, v in knowledge.entries}
    with open(path, "w") as fh:
        cp.write(fh)


def load_network_spec(path, rng=None) -> tuple[EditedNetwork, KnowledgeSet]:
    cp = configparser.ConfigParser()
    cp.read(path)
    sec = cp["network"]
    shapes = [int(s) for s in sec["layer_shapes"].split()]
    orders = [int(r) for r in sec["orders"].split()]
    acts = sec["activations"].split()
    entries = []
    if cp.has_section("knowledge"):
        for key, val in cp["knowledge"].items():
            i, j = (int(tok) for tok in key.split(","))
            entries.append((i, j, float(val)))
    know = KnowledgeSet(tuple(entries))
    return build_edit(know, shapes, orders, int(sec["output_dim"]), acts, rng), know


def basis_length(n: int, r: int) -> int:
    return comb(n + r, r)

