"""Lowering of distance specs to flat stack programs.

Every technology reduces to four primitive frontier types plus min/max
combinators, so evaluation backends only need six opcodes.  A program is
a postorder instruction list: primitives push ``(D, dD/du, dD/dv)`` for
the current point, combinators pop ``k`` entries and keep the extremal
one (first-declared wins ties, which fixes the active-branch partials at
kinks).

Argument slots (4 per op):

=======  =====================================================
TU       ``phi``
NTU      ``alpha, gamma``
LTU      ``wu, wv, c`` with ``wu = lam/(lam+zeta)``,
         ``wv = zeta/(lam+zeta)``, ``c = phi/(lam+zeta)``
ETU      ``alpha, gamma, tau, log(budget)``
MIN/MAX  ``k`` (child count)
=======  =====================================================
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import bargaining as bg
from .errors import ValidationError

OP_TU = 0
OP_NTU = 1
OP_LTU = 2
OP_ETU = 3
OP_MIN = 4
OP_MAX = 5


@dataclass(frozen=True)
class Program:
    """One compiled spec: opcodes, argument rows and required stack depth."""

    codes: np.ndarray  # int32 [L]
    args: np.ndarray  # float64 [L, 4]
    stack_need: int

    def __len__(self) -> int:
        return len(self.codes)


def _emit(spec: bg.DistanceSpec, codes: list[int], args: list[tuple]) -> None:
    if isinstance(spec, bg.TU):
        codes.append(OP_TU)
        args.append((spec.phi, 0.0, 0.0, 0.0))
    elif isinstance(spec, bg.NTU):
        codes.append(OP_NTU)
        args.append((spec.alpha, spec.gamma, 0.0, 0.0))
    elif isinstance(spec, bg.LTU):
        s = spec.lam + spec.zeta
        codes.append(OP_LTU)
        args.append((spec.lam / s, spec.zeta / s, spec.phi / s, 0.0))
    elif isinstance(spec, bg.ETU):
        codes.append(OP_ETU)
        args.append((spec.alpha, spec.gamma, spec.tau, math.log(spec.budget)))
    elif isinstance(spec, bg.TaxSchedule):
        _emit(spec.as_intersection(), codes, args)
    elif isinstance(spec, bg.PublicGoods):
        _emit(spec.as_union(), codes, args)
    elif isinstance(spec, (bg.Union, bg.Intersection)):
        kids = spec.children()
        for child in kids:
            _emit(child, codes, args)
        codes.append(OP_MIN if isinstance(spec, bg.Union) else OP_MAX)
        args.append((float(len(kids)), 0.0, 0.0, 0.0))
    else:
        raise ValidationError(f"cannot compile spec of type {type(spec).__name__}")


def _stack_need(codes: np.ndarray, args: np.ndarray) -> int:
    depth = peak = 0
    for op, a in zip(codes, args):
        if op in (OP_MIN, OP_MAX):
            depth -= int(a[0]) - 1
        else:
            depth += 1
            peak = max(peak, depth)
    if depth != 1:
        raise ValidationError("malformed program: stack does not reduce to one value")
    return peak


@lru_cache(maxsize=4096)
def compile_program(spec: bg.DistanceSpec) -> Program:
    codes_l: list[int] = []
    args_l: list[tuple] = []
    _emit(spec, codes_l, args_l)
    codes = np.asarray(codes_l, dtype=np.int32)
    args = np.asarray(args_l, dtype=np.float64).reshape(len(codes_l), 4)
    return Program(codes=codes, args=args, stack_need=_stack_need(codes, args))


@dataclass(frozen=True)
class CompiledTable:
    """A batch of programs, one per market cell, padded to equal length.

    ``groups`` lists ``(row_indices, length)`` for rows sharing an opcode
    sequence, which lets the NumPy backend vectorize within each group.
    """

    codes: np.ndarray  # int32 [P, L]
    args: np.ndarray  # float64 [P, L, 4]
    lens: np.ndarray  # int32 [P]
    stack_need: int
    groups: tuple[tuple[np.ndarray, int], ...]

    @property
    def size(self) -> int:
        return self.codes.shape[0]


def compile_table(specs) -> CompiledTable:
    """Compile a flat sequence of specs into one padded table."""
    programs = [compile_program(s) for s in specs]
    if not programs:
        raise ValidationError("cannot compile an empty table")
    lmax = max(len(p) for p in programs)
    n = len(programs)
    codes = np.full((n, lmax), -1, dtype=np.int32)
    args = np.zeros((n, lmax, 4), dtype=np.float64)
    lens = np.empty(n, dtype=np.int32)
    for i, p in enumerate(programs):
        L = len(p)
        codes[i, :L] = p.codes
        args[i, :L] = p.args
        lens[i] = L

    by_shape: dict[bytes, list[int]] = {}
    for i, p in enumerate(programs):
        by_shape.setdefault(p.codes.tobytes(), []).append(i)
    groups = tuple(
        (np.asarray(idx, dtype=np.intp), int(lens[idx[0]])) for idx in by_shape.values()
    )
    return CompiledTable(
        codes=codes,
        args=args,
        lens=lens,
        stack_need=max(p.stack_need for p in programs),
        groups=groups,
    )
