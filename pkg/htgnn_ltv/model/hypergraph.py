"""Per-batch kNN hypergraphs, hypergraph convolution and JS structural supervision."""

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from ..core import tensor as T
from ..core.tensor import Tensor
from ..utils.exceptions import ContractError

NORM_FLOOR = 1e-12
ROW_SUM_TOLERANCE = 1e-9


@dataclass
class Hypergraph:
    """Incidence matrix H[|V|×|E|] with hyperedge weights and both degree vectors."""

    incidence: np.ndarray
    edge_weights: np.ndarray
    vertex_degrees: np.ndarray
    edge_degrees: np.ndarray

    @classmethod
    def from_incidence(cls, incidence, edge_weights=None) -> "Hypergraph":
        incidence = np.asarray(incidence, dtype=np.float64)
        weights = np.ones(incidence.shape[1]) if edge_weights is None else np.asarray(edge_weights, dtype=np.float64)
        return cls(incidence=incidence, edge_weights=weights, vertex_degrees=incidence @ weights, edge_degrees=incidence.sum(axis=0))

    @property
    def n_vertices(self) -> int:
        return self.incidence.shape[0]

    def members(self, edge: int) -> list[int]:
        return [int(v) for v in np.flatnonzero(self.incidence[:, edge])]


def build_knn_hyperedges(embeddings: Union[Tensor, np.ndarray], k: int) -> Hypergraph:
    """One hyperedge per vertex: the vertex plus its k Euclidean-nearest neighbors.

    Ties in distance go to the lower vertex index. All ω(e) = 1.

    Raises:
        ContractError: Unless b >= 2 and 1 <= k <= b - 1
    """
    x = embeddings.data if isinstance(embeddings, Tensor) else np.asarray(embeddings, dtype=np.float64)
    b = x.shape[0]
    if b < 2:
        raise ContractError(f"build_knn_hyperedges needs at least two vertices, got {b}")
    if not 1 <= k <= b - 1:
        raise ContractError(f"k must satisfy 1 <= k <= b-1 = {b - 1}, got {k}")
    order = np.arange(b)
    incidence = np.zeros((b, b))
    for anchor in range(b):
        distances = np.sum((x - x[anchor]) ** 2, axis=1)
        ranked = np.lexsort((order, distances))
        neighbors = ranked[ranked != anchor][:k]
        incidence[anchor, anchor] = 1.0
        incidence[neighbors, anchor] = 1.0
    return Hypergraph.from_incidence(incidence)


def propagation_factors(g: Hypergraph) -> tuple[np.ndarray, np.ndarray]:
    """Constant halves of the normalised propagation: (D_v^-1/2 H, D_e^-1 Hᵀ D_v^-1/2).

    Raises:
        ContractError: If any vertex or edge degree is zero
    """
    if np.any(g.vertex_degrees <= 0) or np.any(g.edge_degrees <= 0):
        raise ContractError("hypergraph has a vertex or hyperedge with zero degree")
    dv = 1.0 / np.sqrt(g.vertex_degrees)
    left = dv[:, None] * g.incidence
    right = (g.incidence / g.edge_degrees[None, :]).T * dv[None, :]
    return left, right


def hypergraph_convolve(x: Tensor, g: Hypergraph, theta: Tensor, edge_weights: Optional[Tensor] = None) -> Tensor:
    """ReLU(D_v^-1/2 H W D_e^-1 Hᵀ D_v^-1/2 x Θ).

    Args:
        x: Vertex features [b×d]
        g: Hypergraph over the b vertices
        theta: Θ [d×d']
        edge_weights: Trainable diagonal of W, either a scalar shared by all
            hyperedges or one entry per hyperedge; ``g.edge_weights`` when omitted.
            Only the propagation uses it: D_v comes from ``g.edge_weights``, so a
            scalar scales the output of the degree-normalised operator as a whole.

    Returns:
        Convolved features [b×d']
    """
    left, right = propagation_factors(g)
    weights = Tensor(g.edge_weights) if edge_weights is None else edge_weights
    edges = T.matmul(Tensor(right), x)
    if weights.size == 1:
        edges = T.mul(edges, T.reshape(weights, (1, 1)))
    else:
        edges = T.mul(edges, T.reshape(weights, (-1, 1)))
    return T.relu(T.matmul(T.matmul(Tensor(left), edges), theta))


def embedding_dissimilarity_M(u: Tensor) -> Tensor:
    """Row-wise softmax of 1 − cosine similarity; the diagonal takes part."""
    squared = T.tensor_sum(T.mul(u, u), axis=1, keepdims=True)
    norms = T.sqrt(T.clamp(squared, low=NORM_FLOOR**2))
    unit = T.div(u, norms)
    cosine = T.matmul(unit, T.swap_last(unit))
    return T.softmax_rows(T.sub(1.0, cosine))


def label_difference_N(labels) -> np.ndarray:
    """Row-wise softmax of pairwise absolute label differences."""
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if y.size < 2:
        raise ContractError(f"label_difference_N needs at least two labels, got {y.size}")
    return T.softmax_rows(Tensor(np.abs(y[:, None] - y[None, :]))).data


def surrogate_weight(mu_p: float, sigma_p: float, mu_t: float, sigma_t: float) -> float:
    """1 / exp(|μ_p − μ_t| · |σ_p − σ_t|)."""
    if sigma_p < 0 or sigma_t < 0:
        raise ContractError("standard deviations must be non-negative")
    return float(np.exp(-abs(mu_p - mu_t) * abs(sigma_p - sigma_t)))


def js_supervision_loss(M: Tensor, N, labeled_mask, weight: float) -> Tensor:
    """½·Σ_T KL(M_i ‖ (M_i+N_i)/2) + ½·weight·Σ_F KL(M_j ‖ (M_j+N_j)/2).

    Args:
        M: Embedding-dissimilarity distribution [b×b]
        N: Label-difference distribution [b×b]; rows in F come from surrogate labels
        labeled_mask: True for rows with an observed label (set T)
        weight: Surrogate weight applied to the rows of F

    Raises:
        ContractError: If a row of M or N does not sum to 1 within 1e-9
    """
    M = T.as_tensor(M)
    n = N.data if isinstance(N, Tensor) else np.asarray(N, dtype=np.float64)
    for name, rows in (("M", M.data), ("N", n)):
        if np.any(np.abs(rows.sum(axis=-1) - 1.0) > ROW_SUM_TOLERANCE):
            raise ContractError(f"{name} is not row-stochastic")
    labeled = np.asarray(labeled_mask, dtype=bool).reshape(-1)
    midpoint = T.mul(T.add(M, n), 0.5)
    kl_rows = T.tensor_sum(T.mul(M, T.sub(T.log(M), T.log(midpoint))), axis=1)
    coefficients = np.where(labeled, 0.5, 0.5 * weight)
    return T.tensor_sum(T.mul(kl_rows, coefficients))
