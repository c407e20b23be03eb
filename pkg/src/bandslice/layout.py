"""Simulated process grid, block-cyclic / irregular 1D layouts and redistribution.

Ranks are numbered row-major on a ``p x q`` grid (``rank = pr * q + pc``).
Communication goes through :class:`Harness`, an in-process message queue
that runs every rank's send step for a phase, then delivers all messages
sorted by ``(source, round, sequence)``; results are therefore identical
whether ranks execute sequentially or on threads.  Messages a rank sends
to itself are local copies and are not counted as traffic.

Within a redistribution message, segments are ordered by ascending target
rank and then by ascending global index.
"""

from __future__ import annotations

import csv
import io
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np


class LayoutError(ValueError):
    """Inconsistent layout metadata."""


class LocalityError(RuntimeError):
    """A message left the communicator its phase is restricted to."""


@dataclass(frozen=True)
class ProcessGrid:
    p: int
    q: int

    def __post_init__(self):
        if self.p < 1 or self.q < 1:
            raise LayoutError(f"grid dimensions must be positive, got {self.p}x{self.q}")

    @property
    def size(self):
        return self.p * self.q

    def rank(self, pr, pc):
        return pr * self.q + pc

    def coords(self, rank):
        return divmod(rank, self.q)

    def row_group(self, pr):
        """Ranks sharing process row ``pr`` (the ``mpi_comm_rows`` analog)."""
        return [self.rank(pr, c) for c in range(self.q)]

    def col_group(self, pc):
        """Ranks sharing process column ``pc`` (the ``mpi_comm_cols`` analog)."""
        return [self.rank(r, pc) for r in range(self.p)]

    def same_group(self, a, b, group):
        if group == "world":
            return True
        (ra, ca), (rb, cb) = self.coords(a), self.coords(b)
        if group == "rows":
            return ra == rb
        if group == "cols":
            return ca == cb
        raise ValueError(f"unknown group {group!r}")


def numroc(n, nb, iproc, nprocs):
    """Number of rows/columns of an ``n``-long block-cyclic dimension owned by ``iproc``."""
    nblocks, extra = divmod(n, nb)
    count = (nblocks // nprocs) * nb
    rem = nblocks % nprocs
    if iproc < rem:
        count += nb
    elif iproc == rem:
        count += extra
    return count


def cyclic_indices(n, nb, iproc, nprocs):
    """Ascending global indices owned by ``iproc`` in a block-cyclic dimension."""
    idx = np.arange(n)
    return idx[(idx // nb) % nprocs == iproc]


def caterpillar_rounds(size):
    """Round-robin pairing; ``rounds[t][i]`` is rank ``i``'s partner in round ``t`` (or ``i``).

    Uses ``2 * ceil(size / 2) - 1`` rounds and pairs every two members once.
    """
    m = size + (size % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        partner = list(range(size))
        for i in range(m // 2):
            a, b = players[i], players[m - 1 - i]
            if a < size and b < size:
                partner[a], partner[b] = b, a
        rounds.append(partner)
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


@dataclass(frozen=True)
class Message:
    src: int
    dst: int
    phase: str
    payload: np.ndarray
    rows: object = None
    cols: object = None
    round: int = 0
    seq: int = 0
    tag: object = None

    @property
    def nbytes(self):
        return int(self.payload.nbytes)


@dataclass
class PhaseTraffic:
    phase: str
    group: str
    messages: int
    bytes: int
    sent: np.ndarray
    received: np.ndarray
    local_bytes: int = 0

    @property
    def max_rank_bytes(self):
        return int(max(self.sent.max(initial=0), self.received.max(initial=0)))


@dataclass
class TrafficReport:
    phases: list = field(default_factory=list)

    @property
    def total_bytes(self):
        return sum(p.bytes for p in self.phases)

    @property
    def total_messages(self):
        return sum(p.messages for p in self.phases)

    def phase(self, name):
        for p in self.phases:
            if p.phase == name:
                return p
        raise KeyError(name)

    def rows(self):
        return [(p.phase, p.messages, p.bytes, p.max_rank_bytes) for p in self.phases]

    def to_csv(self, label=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        head = ["phase", "messages", "bytes", "max_rank_bytes"]
        w.writerow(([("label")] if label is not None else []) + head)
        for row in self.rows():
            w.writerow(([label] if label is not None else []) + list(row))
        return buf.getvalue()


class Harness:
    """Lockstep message exchange among the ranks of a grid.

    ``run_phase(name, group, step)`` calls ``step(rank, send)`` for every
    rank; ``send(dst, payload, **meta)`` enqueues a message.  After all
    ranks ran, the inboxes are returned as ``{rank: [Message, ...]}``.
    When ``schedule`` is given (``schedule[t][rank]`` = partner in round
    ``t``), every non-local message must go to the sender's partner for the
    message's round.
    """

    def __init__(self, grid, threads=False):
        self.grid = grid
        self.threads = threads
        self.report = TrafficReport()

    def run_phase(self, name, group, step, schedule=None, members=None):
        grid = self.grid
        out = []
        lock = threading.Lock()
        seqs = {}

        def send_from(src):
            def send(dst, payload, rows=None, cols=None, round=0, tag=None):
                if not 0 <= dst < grid.size:
                    raise LocalityError(f"rank {src} sent to nonexistent rank {dst}")
                if dst != src and not grid.same_group(src, dst, group):
                    raise LocalityError(f"phase {name!r}: rank {src} -> {dst} crosses the {group} communicator")
                if schedule is not None and dst != src:
                    partner = schedule[round][members[src]]
                    if members.get(dst) != partner:
                        raise LocalityError(f"phase {name!r}: rank {src} -> {dst} not paired in round {round}")
                payload = np.ascontiguousarray(payload)
                with lock:
                    seq = seqs.get(src, 0)
                    seqs[src] = seq + 1
                    out.append(Message(src, dst, name, payload, rows, cols, round, seq, tag))

            return send

        ranks = range(grid.size)
        if self.threads and grid.size > 1:
            with ThreadPoolExecutor(max_workers=min(grid.size, 8)) as pool:
                list(pool.map(lambda r: step(r, send_from(r)), ranks))
        else:
            for r in ranks:
                step(r, send_from(r))

        out.sort(key=lambda m: (m.dst, m.src, m.round, m.seq))
        inbox = {r: [] for r in ranks}
        sent = np.zeros(grid.size, dtype=np.int64)
        recv = np.zeros(grid.size, dtype=np.int64)
        n_msg = n_bytes = local = 0
        for m in out:
            inbox[m.dst].append(m)
            if m.src == m.dst:
                local += m.nbytes
                continue
            n_msg += 1
            n_bytes += m.nbytes
            sent[m.src] += m.nbytes
            recv[m.dst] += m.nbytes
        if sent.sum() != recv.sum():
            raise AssertionError("traffic not conserved")
        self.report.phases.append(PhaseTraffic(name, group, n_msg, n_bytes, sent, recv, local))
        return inbox


@dataclass
class BlockCyclicLayout:
    """2D block-cyclic distribution with square ``nb x nb`` blocks.

    Block ``(I, J)`` lives on grid position ``(I mod p, J mod q)``;
    ``tiles[rank]`` is that rank's local array.
    """

    n_rows: int
    n_cols: int
    nb: int
    grid: ProcessGrid
    tiles: list

    def __post_init__(self):
        if self.nb < 1:
            raise LayoutError("block size must be positive")
        if len(self.tiles) != self.grid.size:
            raise LayoutError(f"{len(self.tiles)} tiles for {self.grid.size} ranks")
        for r, t in enumerate(self.tiles):
            if t.shape != self.local_shape(r):
                raise LayoutError(f"rank {r} tile has shape {t.shape}, expected {self.local_shape(r)}")

    def local_shape(self, rank):
        pr, pc = self.grid.coords(rank)
        return (numroc(self.n_rows, self.nb, pr, self.grid.p), numroc(self.n_cols, self.nb, pc, self.grid.q))

    def row_indices(self, pr):
        return cyclic_indices(self.n_rows, self.nb, pr, self.grid.p)

    def col_indices(self, pc):
        return cyclic_indices(self.n_cols, self.nb, pc, self.grid.q)

    def owner(self, i, j):
        return self.grid.rank((i // self.nb) % self.grid.p, (j // self.nb) % self.grid.q)

    def global_to_local(self, i, j):
        """``(rank, local_row, local_col)`` of global entry ``(i, j)``."""
        nb, p, q = self.nb, self.grid.p, self.grid.q
        li = (i // (nb * p)) * nb + i % nb
        lj = (j // (nb * q)) * nb + j % nb
        return self.owner(i, j), li, lj

    def local_to_global(self, rank, li, lj):
        pr, pc = self.grid.coords(rank)
        nb, p, q = self.nb, self.grid.p, self.grid.q
        i = ((li // nb) * p + pr) * nb + li % nb
        j = ((lj // nb) * q + pc) * nb + lj % nb
        return i, j

    def local_col(self, j):
        nb, q = self.nb, self.grid.q
        return (np.asarray(j) // (nb * q)) * nb + np.asarray(j) % nb

    @classmethod
    def empty(cls, n_rows, n_cols, nb, grid, dtype=np.float64):
        tiles = []
        for r in range(grid.size):
            pr, pc = grid.coords(r)
            shape = (numroc(n_rows, nb, pr, grid.p), numroc(n_cols, nb, pc, grid.q))
            tiles.append(np.zeros(shape, dtype=dtype))
        return cls(n_rows, n_cols, nb, grid, tiles)

    @classmethod
    def from_global(cls, M, nb, grid):
        """Serial construction from a full matrix (reference path)."""
        M = np.asarray(M)
        out = cls.empty(M.shape[0], M.shape[1], nb, grid, M.dtype)
        for r in range(grid.size):
            pr, pc = grid.coords(r)
            out.tiles[r][...] = M[np.ix_(out.row_indices(pr), out.col_indices(pc))]
        return out

    def to_global(self):
        dtype = np.result_type(*self.tiles) if self.tiles else np.float64
        M = np.zeros((self.n_rows, self.n_cols), dtype=dtype)
        for r, t in enumerate(self.tiles):
            pr, pc = self.grid.coords(r)
            M[np.ix_(self.row_indices(pr), self.col_indices(pc))] = t
        return M


@dataclass
class Irregular1DLayout:
    """Column blocks of varying width: rank ``i`` holds ``counts[i]`` full columns."""

    n_rows: int
    counts: np.ndarray
    blocks: list

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if np.any(self.counts < 0):
            raise LayoutError("column counts must be nonnegative")
        if len(self.blocks) != self.counts.size:
            raise LayoutError(f"{len(self.blocks)} blocks for {self.counts.size} counts")
        for i, (b, m) in enumerate(zip(self.blocks, self.counts)):
            if b.shape != (self.n_rows, m):
                raise LayoutError(f"rank {i} block has shape {b.shape}, expected {(self.n_rows, int(m))}")

    @property
    def offsets(self):
        return np.concatenate([[0], np.cumsum(self.counts)])

    @property
    def nev(self):
        return int(self.counts.sum())

    def owner(self, j):
        """Rank holding global column ``j``."""
        return int(np.searchsorted(self.offsets, j, side="right") - 1)

    def global_col(self, rank, local):
        return self.offsets[rank] + local

    @classmethod
    def from_global(cls, M, counts):
        M = np.asarray(M)
        counts = np.asarray(counts, dtype=np.int64)
        if counts.sum() != M.shape[1]:
            raise LayoutError(f"counts sum to {counts.sum()} but matrix has {M.shape[1]} columns")
        off = np.concatenate([[0], np.cumsum(counts)])
        blocks = [M[:, off[i] : off[i + 1]].copy() for i in range(counts.size)]
        return cls(M.shape[0], counts, blocks)

    def to_global(self):
        dtype = np.result_type(*self.blocks) if self.blocks else np.float64
        if not self.blocks:
            return np.zeros((self.n_rows, 0), dtype=dtype)
        return np.hstack([b.astype(dtype, copy=False) for b in self.blocks])


def _check_grid(counts, grid):
    if len(counts) != grid.size:
        raise LayoutError(f"{len(counts)} ranks in the 1D layout but grid has {grid.size}")


def redistribute_1d_to_2d(X: Irregular1DLayout, nb, grid, threads=False):
    """Move an irregular 1D column layout to 2D block-cyclic form in two phases.

    Phase 1 (column communicators): every rank cuts its columns into the
    row segments owned by each grid row and exchanges them all-to-all.
    Phase 2 (row communicators): ranks derive global column indices from
    the count vector and exchange column groups pairwise in caterpillar
    rounds.  Returns ``(BlockCyclicLayout, TrafficReport)``.
    """
    _check_grid(X.counts, grid)
    n, nev = X.n_rows, X.nev
    dtype = np.result_type(*X.blocks) if X.blocks else np.float64
    out = BlockCyclicLayout.empty(n, nev, nb, grid, dtype)
    h = Harness(grid, threads)
    if nev == 0:
        return out, h.report
    off = X.offsets
    row_sets = [out.row_indices(r) for r in range(grid.p)]

    def phase1(rank, send):
        pr, pc = grid.coords(rank)
        A = X.blocks[rank]
        if A.shape[1] == 0:
            return
        for r in range(grid.p):
            if row_sets[r].size:
                send(grid.rank(r, pc), A[row_sets[r]], rows=r, cols=rank)

    held = h.run_phase("phase1-cols", "cols", phase1)

    rounds = caterpillar_rounds(grid.q)

    def phase2(rank, send):
        pr, pc = grid.coords(rank)
        segs = held[rank]
        if not segs:
            return
        cols = np.concatenate([np.arange(off[m.cols], off[m.cols + 1]) for m in segs])
        data = np.hstack([m.payload for m in segs])
        target = (cols // nb) % grid.q
        # own columns first (local copy), then one partner per round
        order = [pc] + [rounds[t][pc] for t in range(len(rounds))]
        for t, c in enumerate(order):
            if t and c == pc:
                continue
            sel = np.flatnonzero(target == c)
            if sel.size:
                send(grid.rank(pr, c), data[:, sel], rows=pr, cols=cols[sel], round=max(t - 1, 0))

    members = {r: grid.coords(r)[1] for r in range(grid.size)}
    got = h.run_phase("phase2-rows", "rows", phase2, schedule=rounds, members=members)
    for rank, msgs in got.items():
        tile = out.tiles[rank]
        for m in msgs:
            tile[:, out.local_col(m.cols)] = m.payload
    return out, h.report


def redistribute_2d_to_1d(B: BlockCyclicLayout, counts, threads=False):
    """Inverse of :func:`redistribute_1d_to_2d` for the same count vector."""
    grid, nb = B.grid, B.nb
    counts = np.asarray(counts, dtype=np.int64)
    _check_grid(counts, grid)
    if counts.sum() != B.n_cols:
        raise LayoutError(f"counts sum to {counts.sum()} but layout has {B.n_cols} columns")
    n = B.n_rows
    dtype = B.tiles[0].dtype if B.tiles else np.float64
    blocks = [np.zeros((n, int(m)), dtype=dtype) for m in counts]
    out = Irregular1DLayout(n, counts, blocks)
    h = Harness(grid, threads)
    if counts.sum() == 0:
        return out, h.report
    off = out.offsets
    owner_of = np.repeat(np.arange(counts.size), counts)
    owner_pc = owner_of % grid.q
    rounds = caterpillar_rounds(grid.q)
    members = {r: grid.coords(r)[1] for r in range(grid.size)}

    def phase2(rank, send):
        pr, pc = grid.coords(rank)
        tile = B.tiles[rank]
        cols = B.col_indices(pc)
        if tile.size == 0:
            return
        target = owner_pc[cols]
        order = [pc] + [rounds[t][pc] for t in range(len(rounds))]
        for t, c in enumerate(order):
            if t and c == pc:
                continue
            sel = np.flatnonzero(target == c)
            if sel.size:
                send(grid.rank(pr, c), tile[:, sel], rows=pr, cols=cols[sel], round=max(t - 1, 0))

    held = h.run_phase("phase2-rows", "rows", phase2, schedule=rounds, members=members)
    row_sets = [B.row_indices(r) for r in range(grid.p)]

    def phase1(rank, send):
        pr, pc = grid.coords(rank)
        msgs = held[rank]
        if not msgs:
            return
        cols = np.concatenate([m.cols for m in msgs])
        data = np.hstack([m.payload for m in msgs])
        order = np.argsort(cols, kind="stable")
        cols, data = cols[order], data[:, order]
        dest = owner_of[cols]
        for d in np.unique(dest):
            sel = dest == d
            send(int(d), data[:, sel], rows=pr, cols=cols[sel])

    got = h.run_phase("phase1-cols", "cols", phase1)
    for rank, msgs in got.items():
        blk = out.blocks[rank]
        for m in msgs:
            blk[np.ix_(row_sets[m.rows], m.cols - off[rank])] = m.payload
    return out, h.report


def naive_redistribute_oracle(X: Irregular1DLayout, nb, grid):
    """Gather everything on rank 0, then scatter the 2D tiles (reference path)."""
    _check_grid(X.counts, grid)
    n, nev = X.n_rows, X.nev
    dtype = np.result_type(*X.blocks) if X.blocks else np.float64
    out = BlockCyclicLayout.empty(n, nev, nb, grid, dtype)
    h = Harness(grid)
    if nev == 0:
        return out, h.report
    off = X.offsets

    def gather(rank, send):
        if X.blocks[rank].shape[1]:
            send(0, X.blocks[rank], cols=rank)

    got = h.run_phase("gather", "world", gather)
    full = np.zeros((n, nev), dtype=dtype)
    for m in got[0]:
        full[:, off[m.cols] : off[m.cols + 1]] = m.payload

    def scatter(rank, send):
        if rank != 0:
            return
        for r in range(grid.size):
            pr, pc = grid.coords(r)
            tile = full[np.ix_(out.row_indices(pr), out.col_indices(pc))]
            if tile.size:
                send(r, tile)

    got = h.run_phase("scatter", "world", scatter)
    for r, msgs in got.items():
        for m in msgs:
            out.tiles[r][...] = m.payload
    return out, h.report


def _band_coords(rows, cols, n_bw):
    """Global ``(i, j)`` of lower-band entries inside a tile, column-major order."""
    I, J = np.meshgrid(rows, cols, indexing="ij")
    mask = ((I - J) >= 0) & ((I - J) <= n_bw)
    sel = mask.T.ravel()
    return I.T.ravel()[sel], J.T.ravel()[sel], mask


def gather_band_to_compact(Dl: BlockCyclicLayout, n_bw, threads=False):
    """Give every rank the full lower compact band of a block-cyclic band matrix.

    Phase 1 exchanges each rank's in-band entries within its process column,
    phase 2 forwards everything a rank then holds within its process row.
    Returns ``(bands_per_rank, TrafficReport)`` with ``bands[d, j] = D[j+d, j]``.
    """
    grid = Dl.grid
    n = Dl.n_rows
    if Dl.n_cols != n:
        raise LayoutError("band gather needs a square matrix")
    for r, t in enumerate(Dl.tiles):
        if t.shape != Dl.local_shape(r):
            raise LayoutError(f"rank {r} tile shape {t.shape} disagrees with the layout")
    h = Harness(grid, threads)
    coords = {}
    for r in range(grid.size):
        pr, pc = grid.coords(r)
        coords[r] = _band_coords(Dl.row_indices(pr), Dl.col_indices(pc), n_bw)

    def own_payload(rank):
        mask = coords[rank][2]
        return Dl.tiles[rank].T[mask.T]

    def phase1(rank, send):
        pr, pc = grid.coords(rank)
        data = own_payload(rank)
        if data.size == 0:
            return
        for dst in grid.col_group(pc):
            send(dst, data, tag=(rank,))

    held = h.run_phase("phase1-cols", "cols", phase1)

    def phase2(rank, send):
        pr, pc = grid.coords(rank)
        msgs = held[rank]
        if not msgs:
            return
        data = np.concatenate([m.payload for m in msgs])
        tag = tuple(s for m in msgs for s in m.tag)
        for dst in grid.row_group(pr):
            send(dst, data, tag=tag)

    got = h.run_phase("phase2-rows", "rows", phase2)
    dtype = Dl.tiles[0].dtype
    result = []
    for rank in range(grid.size):
        bands = np.zeros((n_bw + 1, n), dtype=dtype)
        for m in got[rank]:
            pos = 0
            for src in m.tag:
                I, J, _ = coords[src]
                k = I.size
                bands[I - J, J] = m.payload[pos : pos + k]
                pos += k
        result.append(bands)
    return result, h.report
