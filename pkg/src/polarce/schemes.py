"""End-to-end estimators of the cascaded channel from one pilot block.

Three schemes share the same inputs: joint greedy pursuit on the vectorized
problem ("omp"), the learned two-stage pipeline ("dncnn-istanet"), and the
hybrid that swaps stage 2 for per-path greedy pursuit ("dncnn-omp"). Stage-1
batches are denoised jointly across trials so evaluation stays paired and fast.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import PilotBlock, SystemConfig
from .denoiser import DenoiserParams, denoise, row_energy, select_support
from .omp import VectorizedProblem, cascaded_estimate, omp, omp_dense
from .polar import CascadedDictionary, PolarDictionary
from .unrolled import ListaParams, lista_forward, project_to_bs_subspace, reconstruct

__all__ = ["PipelineContext", "estimate_omp", "estimate_dncnn_omp",
           "estimate_dncnn_istanet", "SCHEME_FUNCS"]


@dataclass
class PipelineContext:
    config: SystemConfig
    bs: PolarDictionary
    cas: CascadedDictionary
    E: np.ndarray
    stage1: DenoiserParams | None = None
    stage2: ListaParams | None = None
    support_guard: int = 0
    omp_sparsity: int | None = None

    @property
    def joint_sparsity(self) -> int:
        if self.omp_sparsity is not None:
            return self.omp_sparsity
        return self.config.paths_bs * self.config.paths_ris

    def problem(self) -> VectorizedProblem:
        return VectorizedProblem.build(self.bs.F, self.cas.F, self.E)


def estimate_omp(pilots: list[PilotBlock], ctx: PipelineContext) -> np.ndarray:
    """Joint pursuit over the implicit Kronecker design."""
    prob = ctx.problem()
    out = np.zeros((len(pilots), ctx.config.n_bs, ctx.config.n_ris), dtype=np.complex128)
    for i, blk in enumerate(pilots):
        res = omp(blk.Y, prob, ctx.joint_sparsity)
        out[i] = cascaded_estimate(res, prob, ctx.cas.F, ctx.config.power)
    return out


def _stage1_project(pilots: list[PilotBlock], ctx: PipelineContext):
    """Shared front end: denoise row images in one batch, pick supports, project."""
    L = ctx.config.paths_bs
    n = len(pilots)
    C = np.zeros((n, ctx.bs.F.shape[1], L), dtype=np.complex128)
    for i, blk in enumerate(pilots):
        C[i] = row_energy(blk.Y, ctx.bs)[:, None]
    if ctx.stage1 is not None:
        _, C_hat = denoise(C, ctx.stage1)
    else:
        C_hat = C
    supports, proj = [], []
    for i, blk in enumerate(pilots):
        sup = select_support(C_hat[i], L, ctx.bs, guard=ctx.support_guard)
        supports.append(sup)
        proj.append(project_to_bs_subspace(blk.Y, sup.A_hat, ctx.config.power))
    return supports, proj


def estimate_dncnn_omp(pilots: list[PilotBlock], ctx: PipelineContext) -> np.ndarray:
    """Learned support + per-path greedy pursuit on the cascaded dictionary."""
    supports, proj = _stage1_project(pilots, ctx)
    Psi = ctx.E.conj().T @ ctx.cas.F
    out = np.zeros((len(pilots), ctx.config.n_bs, ctx.config.n_ris), dtype=np.complex128)
    for i, (sup, P) in enumerate(zip(supports, proj)):
        X_hat = np.zeros((ctx.config.n_ris, P.shape[1]), dtype=np.complex128)
        for l in range(P.shape[1]):
            b, _ = omp_dense(P[:, l], Psi, ctx.config.paths_ris)
            X_hat[:, l] = ctx.cas.F @ b
        out[i] = reconstruct(sup.A_hat, X_hat)
    return out


def estimate_dncnn_istanet(pilots: list[PilotBlock], ctx: PipelineContext) -> np.ndarray:
    """Learned support + unrolled learned solver, batched across trials."""
    if ctx.stage2 is None:
        raise ValueError("dncnn-istanet needs trained stage-2 parameters")
    supports, proj = _stage1_project(pilots, ctx)
    P_all = np.concatenate(proj, axis=1)
    X_all = lista_forward(P_all, ctx.stage2, ctx.E)
    out = np.zeros((len(pilots), ctx.config.n_bs, ctx.config.n_ris), dtype=np.complex128)
    col = 0
    for i, sup in enumerate(supports):
        L = proj[i].shape[1]
        out[i] = reconstruct(sup.A_hat, X_all[:, col:col + L])
        col += L
    return out


SCHEME_FUNCS = {
    "omp": estimate_omp,
    "dncnn-omp": estimate_dncnn_omp,
    "dncnn-istanet": estimate_dncnn_istanet,
}
