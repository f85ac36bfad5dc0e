"""Block-diagonal unitary scattering matrices."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonRepairable

UNITARY_TOL = 1e-9


def unitarity_residual(block):
    """Frobenius norm of ``B^H B - I``."""
    n = block.shape[0]
    return float(np.linalg.norm(block.conj().T @ block - np.eye(n)))


def random_unitary_block(size, rng):
    """Haar-distributed ``size x size`` unitary drawn from ``rng``.

    QR of a complex Gaussian matrix with the phases of R's diagonal moved
    into Q, so R has a nonnegative real diagonal.
    """
    z = (rng.standard_normal((size, size)) + 1j * rng.standard_normal((size, size))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    phase = np.where(np.abs(d) > 0, d / np.abs(d), 1.0)
    return q * phase[np.newaxis, :]


def polar_unitary(block, rank_tol=1e-8):
    u, s, vh = np.linalg.svd(block)
    if s[-1] <= rank_tol * max(s[0], np.finfo(float).tiny):
        raise NonRepairable(f"block is rank deficient (sigma_min/sigma_max = {s[-1] / s[0]:.3g})")
    return u @ vh


@dataclass(frozen=True, eq=False)
class ScatteringMatrix:
    """``X`` unitary blocks of size ``M/X`` forming a block-diagonal matrix."""

    blocks: tuple

    def __post_init__(self):
        blocks = tuple(np.array(b, dtype=complex) for b in self.blocks)
        if not blocks:
            raise ValueError("need at least one block")
        size = blocks[0].shape[0]
        for b in blocks:
            if b.shape != (size, size):
                raise ValueError("all blocks must be square and the same size")
            b.setflags(write=False)
        object.__setattr__(self, "blocks", blocks)

    @property
    def n_groups(self):
        return len(self.blocks)

    @property
    def group_size(self):
        return self.blocks[0].shape[0]

    @property
    def m_elements(self):
        return self.n_groups * self.group_size

    def block_slice(self, chi):
        g = self.group_size
        return slice(chi * g, (chi + 1) * g)

    def full(self):
        return assemble_full(self)

    def with_block(self, chi, block):
        blocks = list(self.blocks)
        blocks[chi] = block
        return ScatteringMatrix(tuple(blocks))

    def max_residual(self):
        return max(unitarity_residual(b) for b in self.blocks)

    def is_unitary(self, tol=UNITARY_TOL):
        return self.max_residual() <= tol

    @classmethod
    def identity(cls, m_elements, n_groups):
        g = m_elements // n_groups
        return cls(tuple(np.eye(g, dtype=complex) for _ in range(n_groups)))

    @classmethod
    def random(cls, m_elements, n_groups, rng):
        if m_elements % n_groups:
            raise ValueError("n_groups must divide m_elements")
        g = m_elements // n_groups
        return cls(tuple(random_unitary_block(g, rng) for _ in range(n_groups)))

    @classmethod
    def from_full(cls, full, n_groups):
        m = full.shape[0]
        g = m // n_groups
        return cls(tuple(full[i * g:(i + 1) * g, i * g:(i + 1) * g] for i in range(n_groups)))

    def to_text(self):
        """Row-major text snapshot; each entry is ``re,im`` at full precision."""
        lines = [f"# scattering m_elements={self.m_elements} n_groups={self.n_groups}"]
        for chi, b in enumerate(self.blocks):
            lines.append(f"block {chi}")
            for row in b:
                lines.append(" ".join(f"{float(z.real)!r},{float(z.imag)!r}" for z in row))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        blocks, rows = [], None
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("block"):
                if rows is not None:
                    blocks.append(rows)
                rows = []
                continue
            if rows is None:
                raise ValueError("matrix row before first block header")
            rows.append([complex(float(re), float(im))
                         for re, im in (tok.split(",") for tok in line.split())])
        if rows is not None:
            blocks.append(rows)
        return cls(tuple(np.array(b, dtype=complex) for b in blocks))


def assemble_full(s: ScatteringMatrix):
    g = s.group_size
    full = np.zeros((s.m_elements, s.m_elements), dtype=complex)
    for chi, b in enumerate(s.blocks):
        full[chi * g:(chi + 1) * g, chi * g:(chi + 1) * g] = b
    return full


def renormalize(s: ScatteringMatrix) -> ScatteringMatrix:
    """Replace each block by its nearest unitary (the polar factor)."""
    return ScatteringMatrix(tuple(polar_unitary(b) for b in s.blocks))
