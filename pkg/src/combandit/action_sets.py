"""Combinatorial action families: multitask arm tuples, layered s-t paths,
and bipartite matchings.

Every action is a k-sparse 0/1 incidence vector over d coordinates.  The
three families share a canonical coordinate layout:

* multitask — block j (of k) owns coordinates ``j*n .. j*n+n-1``; an action
  activates exactly one coordinate per block.
* layered path — the graph has k/2 layers, each fanning out from one
  incoming vertex to d/k intermediate vertices that reconnect at one
  outgoing vertex.  Edges are numbered layer by layer, fan-out edges before
  fan-in edges, so layer j owns edges ``j*2m .. j*2m+2m-1`` with m = d/k.
* matching — coordinate ``j*n + l`` is the edge (row j, column l) of the
  complete bipartite graph between k rows and n columns; an action is a
  maximum matching (one column per row, one row per column).

Enumeration order is lexicographic over the per-block / per-row choice
indices, which makes the layered-path-to-multitask correspondence an index
permutation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

DEFAULT_ENUMERATION_CAP = 10**6


class Family(str, Enum):
    MULTITASK = "multitask"
    LAYERED_PATH = "path"
    MATCHING = "matching"


class ActionSetError(ValueError):
    """Inadmissible dimensions or malformed actions."""


class EnumerationCapExceeded(ActionSetError):
    """The action set is too large to materialize."""


@dataclass(frozen=True)
class Dimensions:
    """Instance triple (d, k, n) plus its family tag.

    d is the ambient dimension, k the sparsity (and loss scale), n the arms
    per sub-problem (d = k*n for all three families).
    """

    d: int
    k: int
    n: int
    family: Family

    def __post_init__(self):
        if self.k < 1 or self.n < 1 or self.d < 1:
            raise ActionSetError("d, k, n must be positive integers")
        if self.k > self.d:
            raise ActionSetError(f"sparsity k={self.k} exceeds dimension d={self.d}")
        if self.d != self.k * self.n:
            raise ActionSetError(
                f"d={self.d} must equal k*n={self.k * self.n} for family {self.family.value}"
            )
        if self.family is Family.MULTITASK and self.n < 2:
            raise ActionSetError("multitask requires n >= 2")
        if self.family is Family.LAYERED_PATH:
            if self.k % 2 != 0:
                raise ActionSetError(f"layered path requires even k, got k={self.k}")
            if self.d % 2 != 0:
                raise ActionSetError(f"layered path requires even d, got d={self.d}")
            if self.d % self.k != 0:
                raise ActionSetError(
                    f"layered path requires d divisible by k, got d={self.d}, k={self.k}"
                )
            if self.k > self.d // 2:
                raise ActionSetError(
                    f"layered path requires k <= d/2, got k={self.k}, d={self.d}"
                )
        if self.family is Family.MATCHING and self.k > self.n:
            raise ActionSetError(f"matching requires k <= n, got k={self.k}, n={self.n}")


def action_to_string(bits: np.ndarray) -> str:
    """Serialize an incidence vector as a 0/1 string, coordinate 1 leftmost."""
    return "".join("1" if b else "0" for b in bits)


def action_from_string(s: str) -> np.ndarray:
    if any(c not in "01" for c in s):
        raise ActionSetError(f"malformed action string: {s!r}")
    return np.frombuffer(s.encode("ascii"), dtype=np.uint8) - ord("0")


class ActionSet:
    """Base class: an enumerable family of k-sparse incidence vectors."""

    def __init__(self, dims: Dimensions):
        self.dims = dims
        self._matrix: np.ndarray | None = None
        self._active: np.ndarray | None = None

    @property
    def cardinality(self) -> int:
        raise NotImplementedError

    def describe(self) -> str:
        d = self.dims
        return (
            f"family={d.family.value} d={d.d} k={d.k} n={d.n} "
            f"cardinality={self.cardinality}"
        )

    # -- choice-tuple codec -------------------------------------------------
    # Each family indexes its actions by a tuple of per-block choices; the
    # methods below convert between tuples and incidence vectors.

    def _choice_iter(self):
        raise NotImplementedError

    def _choices_to_bits(self, choices) -> np.ndarray:
        raise NotImplementedError

    def uniforms_per_round(self) -> int:
        """How many uniforms a single uniform draw from this set consumes."""
        raise NotImplementedError

    def sample_uniform(self, rng: np.random.Generator) -> np.ndarray:
        """One uniform draw from the set, consuming ``uniforms_per_round()``
        uniforms from ``rng``."""
        raise NotImplementedError

    # -- enumeration ----------------------------------------------------------

    def check_cap(self, cap: int | None = None) -> None:
        cap = DEFAULT_ENUMERATION_CAP if cap is None else cap
        if self.cardinality > cap:
            raise EnumerationCapExceeded(
                f"cardinality {self.cardinality} exceeds enumeration cap {cap}"
            )

    def enumerate_actions(self, cap: int | None = None) -> np.ndarray:
        """All actions as a (|S|, d) uint8 matrix in canonical order."""
        self.check_cap(cap)
        if self._matrix is None:
            rows = [self._choices_to_bits(c) for c in self._choice_iter()]
            self._matrix = np.asarray(rows, dtype=np.uint8)
        return self._matrix

    def active_coords(self, cap: int | None = None) -> np.ndarray:
        """Active coordinates of every action, (|S|, k) int64, rows sorted."""
        if self._active is None:
            matrix = self.enumerate_actions(cap)
            self._active = np.asarray(
                [np.flatnonzero(row) for row in matrix], dtype=np.int64
            )
        return self._active

    def contains(self, bits: np.ndarray) -> bool:
        raise NotImplementedError

    def _check_length(self, bits: np.ndarray) -> np.ndarray:
        bits = np.asarray(bits)
        if bits.ndim != 1 or bits.shape[0] != self.dims.d:
            raise ActionSetError(
                f"action has length {bits.shape}, expected ({self.dims.d},)"
            )
        if not np.isin(bits, (0, 1)).all():
            raise ActionSetError("action entries must be 0 or 1")
        return bits.astype(np.uint8)


class MultitaskSet(ActionSet):
    """k simultaneous n-armed choices: one active coordinate per block."""

    def __init__(self, k: int, n: int):
        super().__init__(Dimensions(d=k * n, k=k, n=n, family=Family.MULTITASK))

    @property
    def cardinality(self) -> int:
        return self.dims.n ** self.dims.k

    def _choice_iter(self):
        return itertools.product(range(self.dims.n), repeat=self.dims.k)

    def _choices_to_bits(self, choices) -> np.ndarray:
        bits = np.zeros(self.dims.d, dtype=np.uint8)
        for j, c in enumerate(choices):
            bits[j * self.dims.n + c] = 1
        return bits

    def uniforms_per_round(self) -> int:
        return self.dims.k

    def sample_uniform(self, rng: np.random.Generator) -> np.ndarray:
        u = rng.random(self.dims.k)
        cols = np.minimum((u * self.dims.n).astype(np.int64), self.dims.n - 1)
        return self._choices_to_bits(cols)

    def contains(self, bits: np.ndarray) -> bool:
        bits = self._check_length(bits)
        blocks = bits.reshape(self.dims.k, self.dims.n)
        return bool((blocks.sum(axis=1) == 1).all())


class MatchingSet(ActionSet):
    """Maximum matchings of the complete bipartite graph K_{k,n}."""

    def __init__(self, k: int, n: int):
        super().__init__(Dimensions(d=k * n, k=k, n=n, family=Family.MATCHING))

    @property
    def cardinality(self) -> int:
        return math.perm(self.dims.n, self.dims.k)

    def _choice_iter(self):
        return itertools.permutations(range(self.dims.n), self.dims.k)

    def _choices_to_bits(self, choices) -> np.ndarray:
        bits = np.zeros(self.dims.d, dtype=np.uint8)
        for j, c in enumerate(choices):
            bits[j * self.dims.n + c] = 1
        return bits

    def uniforms_per_round(self) -> int:
        return self.dims.k

    def sample_uniform(self, rng: np.random.Generator) -> np.ndarray:
        from . import _kernels

        cols = np.empty(self.dims.k, dtype=np.int64)
        _kernels.draw_injection(self.dims.n, rng.random(self.dims.k), cols)
        return self._choices_to_bits(cols)

    def contains(self, bits: np.ndarray) -> bool:
        bits = self._check_length(bits)
        grid = bits.reshape(self.dims.k, self.dims.n)
        return bool(
            (grid.sum(axis=1) == 1).all() and (grid.sum(axis=0) <= 1).all()
        )


class LayeredPathSet(ActionSet):
    """s-t paths of the layered fan graph.

    The graph has ``layers = k/2`` layers of ``fan = d/k`` intermediate
    vertices each, d edges and d/2 + k/2 + 1 vertices; every s-t path
    traverses exactly one intermediate vertex per layer and has exactly k
    edges.
    """

    def __init__(self, k: int, d: int):
        if k < 1 or d < 1 or d % k != 0:
            raise ActionSetError(
                f"layered path requires d divisible by k, got d={d}, k={k}"
            )
        super().__init__(Dimensions(d=d, k=k, n=d // k, family=Family.LAYERED_PATH))
        self.layers = k // 2
        self.fan = d // k

    @property
    def cardinality(self) -> int:
        return self.fan ** self.layers

    @property
    def num_vertices(self) -> int:
        return self.dims.d // 2 + self.dims.k // 2 + 1

    @property
    def num_edges(self) -> int:
        return self.dims.d

    def fan_out_edge(self, layer: int, vertex: int) -> int:
        """Edge from layer ``layer``'s incoming vertex to intermediate ``vertex``."""
        return layer * 2 * self.fan + vertex

    def fan_in_edge(self, layer: int, vertex: int) -> int:
        """Edge from intermediate ``vertex`` to layer ``layer``'s outgoing vertex."""
        return layer * 2 * self.fan + self.fan + vertex

    def edge_list(self) -> list[tuple[int, int]]:
        """Edges as (tail, head) vertex-id pairs, in edge-index order.

        Vertex ids: 0 is s; layer j's intermediates are ``1 + j*(fan+1) ..
        fan + j*(fan+1)``; layer j's outgoing vertex is ``(j+1)*(fan+1)``;
        the last outgoing vertex is t.
        """
        edges = []
        for j in range(self.layers):
            incoming = j * (self.fan + 1)
            outgoing = (j + 1) * (self.fan + 1)
            for v in range(self.fan):
                edges.append((incoming, incoming + 1 + v))
            for v in range(self.fan):
                edges.append((incoming + 1 + v, outgoing))
        return edges

    def _choice_iter(self):
        return itertools.product(range(self.fan), repeat=self.layers)

    def _choices_to_bits(self, choices) -> np.ndarray:
        bits = np.zeros(self.dims.d, dtype=np.uint8)
        for j, v in enumerate(choices):
            bits[self.fan_out_edge(j, v)] = 1
            bits[self.fan_in_edge(j, v)] = 1
        return bits

    def uniforms_per_round(self) -> int:
        return self.layers

    def sample_uniform(self, rng: np.random.Generator) -> np.ndarray:
        u = rng.random(self.layers)
        verts = np.minimum((u * self.fan).astype(np.int64), self.fan - 1)
        return self._choices_to_bits(verts)

    def contains(self, bits: np.ndarray) -> bool:
        """Walk the edge set from s, consuming active edges layer by layer."""
        bits = self._check_length(bits)
        if int(bits.sum()) != self.dims.k:
            return False
        for j in range(self.layers):
            out_active = [v for v in range(self.fan) if bits[self.fan_out_edge(j, v)]]
            if len(out_active) != 1:
                return False
            v = out_active[0]
            in_active = [w for w in range(self.fan) if bits[self.fan_in_edge(j, w)]]
            if in_active != [v]:
                return False
        return True

    # -- reduction to the multitask problem ---------------------------------

    def multitask_image(self) -> MultitaskSet:
        """The multitask set (k/2 tasks of d/k arms) this graph simulates."""
        return MultitaskSet(k=self.layers, n=self.fan)

    def path_to_multitask(self, bits: np.ndarray) -> np.ndarray:
        """Map a path to its arm tuple: block j selects the intermediate
        vertex the path traverses in layer j."""
        bits = self._check_length(bits)
        if not self.contains(bits):
            raise ActionSetError("input is not an s-t path of this graph")
        out = np.zeros(self.layers * self.fan, dtype=np.uint8)
        for j in range(self.layers):
            for v in range(self.fan):
                if bits[self.fan_out_edge(j, v)]:
                    out[j * self.fan + v] = 1
        return out

    def multitask_to_path(self, bits: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`path_to_multitask`."""
        bits = np.asarray(bits)
        image = self.multitask_image()
        if not image.contains(bits):
            raise ActionSetError("input is not a multitask action of the image set")
        choices = [int(np.flatnonzero(bits[j * self.fan:(j + 1) * self.fan])[0])
                   for j in range(self.layers)]
        return self._choices_to_bits(choices)


def build_multitask(k: int, n: int) -> MultitaskSet:
    """Action set of k simultaneous n-armed problems (rejects n < 2)."""
    if k < 1:
        raise ActionSetError(f"k must be >= 1, got {k}")
    if n < 2:
        raise ActionSetError(f"multitask requires n >= 2, got n={n}")
    return MultitaskSet(k, n)


def build_layered_path_graph(k: int, d: int) -> LayeredPathSet:
    """Action set of s-t paths in the k/2-layer fan graph with d edges."""
    if k < 1 or d < 1:
        raise ActionSetError("k and d must be positive")
    if k % 2 != 0:
        raise ActionSetError(f"layered path requires even k, got k={k}")
    if d % 2 != 0:
        raise ActionSetError(f"layered path requires even d, got d={d}")
    if d % k != 0:
        raise ActionSetError(f"layered path requires d divisible by k, got d={d}, k={k}")
    if k > d // 2:
        raise ActionSetError(f"layered path requires k <= d/2, got k={k}, d={d}")
    return LayeredPathSet(k, d)


def build_matching(k: int, n: int) -> MatchingSet:
    """Action set of maximum matchings in K_{k,n} (rejects k > n)."""
    if k < 1:
        raise ActionSetError(f"k must be >= 1, got {k}")
    if k > n:
        raise ActionSetError(f"matching requires k <= n, got k={k}, n={n}")
    return MatchingSet(k, n)


def build_action_set(family: Family | str, k: int, n: int | None = None,
                     d: int | None = None) -> ActionSet:
    """Family dispatch used by the CLI: multitask/matching take (k, n),
    layered path takes (k, d)."""
    family = Family(family)
    if family is Family.MULTITASK:
        if n is None:
            raise ActionSetError("multitask requires n")
        return build_multitask(k, n)
    if family is Family.MATCHING:
        if n is None:
            raise ActionSetError("matching requires n")
        return build_matching(k, n)
    if d is None:
        if n is None:
            raise ActionSetError("layered path requires d (or n = d/k)")
        d = k * n
    return build_layered_path_graph(k, d)
