"""8-puzzle states as object-feature matrices, transitions and instances.

A state is a tuple ``tiles`` of length 9 where ``tiles[cell]`` is the tile
sitting in ``cell`` (row-major, tile 0 is the blank).  Each tile is one
object; its feature row is ``onehot(tile, 9) ++ onehot(x, 3) ++ onehot(y, 3)``
with ``x = cell % 3`` (column) and ``y = cell // 3`` (row).  Rows are
ordered by tile id, so object identity is fixed and only coordinates move.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SIDE = 3
NUM_TILES = SIDE * SIDE
NUM_FEATURES = NUM_TILES + 2 * SIDE
GOAL = tuple(range(NUM_TILES))
FORMAT_VERSION = 1

# blank moves tried in this order: up, down, left, right
_MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))


class ValidationError(ValueError):
    pass


def validate_tiles(tiles):
    tiles = tuple(int(t) for t in tiles)
    if len(tiles) != NUM_TILES or sorted(tiles) != list(range(NUM_TILES)):
        raise ValidationError(f"not a permutation of 0..{NUM_TILES - 1}: {tiles}")
    return tiles


def encode_state(tiles):
    """Return the 9x15 {0,1} object matrix of ``tiles``."""
    tiles = validate_tiles(tiles)
    x = np.zeros((NUM_TILES, NUM_FEATURES), dtype=np.float32)
    for cell, tile in enumerate(tiles):
        x[tile, tile] = 1
        x[tile, NUM_TILES + cell % SIDE] = 1
        x[tile, NUM_TILES + SIDE + cell // SIDE] = 1
    return x


def encode_states(states):
    return np.stack([encode_state(s) for s in states]) if states else np.zeros((0, NUM_TILES, NUM_FEATURES), np.float32)


def decode_object(row):
    """(tile, x, y) of one feature row, by argmax per one-hot group."""
    row = np.asarray(row)
    tile = int(np.argmax(row[:NUM_TILES]))
    x = int(np.argmax(row[NUM_TILES:NUM_TILES + SIDE]))
    y = int(np.argmax(row[NUM_TILES + SIDE:]))
    return tile, x, y


def decode_state(matrix):
    """Invert :func:`encode_state`.  Raises if two tiles claim one cell."""
    tiles = [-1] * NUM_TILES
    for row in np.asarray(matrix):
        tile, x, y = decode_object(row)
        cell = y * SIDE + x
        if tiles[cell] != -1:
            raise ValidationError(f"cell {cell} occupied twice")
        tiles[cell] = tile
    return validate_tiles(tiles)


def successors(tiles):
    """States reachable by sliding one tile into the blank."""
    tiles = tuple(tiles)
    blank = tiles.index(0)
    r, c = divmod(blank, SIDE)
    out = []
    for dr, dc in _MOVES:
        nr, nc = r + dr, c + dc
        if 0 <= nr < SIDE and 0 <= nc < SIDE:
            other = nr * SIDE + nc
            nxt = list(tiles)
            nxt[blank], nxt[other] = nxt[other], 0
            out.append(tuple(nxt))
    return out


def is_single_swap(pre, suc):
    """True iff ``suc`` is one legal move away from ``pre``."""
    return tuple(suc) in successors(pre)


def is_solvable(tiles):
    """Same parity class as the goal (reachable from it)."""
    seq = [t for t in tiles if t != 0]
    inversions = sum(1 for i in range(len(seq)) for j in range(i + 1, len(seq)) if seq[i] > seq[j])
    return inversions % 2 == 0


def random_state(rng):
    """Uniform sample from the states reachable from :data:`GOAL`."""
    tiles = [int(t) for t in rng.permutation(NUM_TILES)]
    if not is_solvable(tiles):
        i, j = [k for k, t in enumerate(tiles) if t != 0][:2]
        tiles[i], tiles[j] = tiles[j], tiles[i]
    return tuple(tiles)


def random_walk(start, steps, rng, backtrack=False):
    """Walk ``steps`` moves from ``start``; return the visited states.

    With ``backtrack=False`` a move never returns to an already visited state
    unless every neighbour has been visited.
    """
    path = [tuple(start)]
    seen = {path[0]}
    for _ in range(steps):
        options = successors(path[-1])
        if not backtrack:
            fresh = [s for s in options if s not in seen]
            options = fresh or options
        nxt = options[int(rng.integers(len(options)))]
        path.append(nxt)
        seen.add(nxt)
    return path


@dataclass
class TransitionSet:
    """Transition pairs plus a train/test split.

    ``pre`` and ``suc`` are lists of tile tuples; the first ``num_train``
    pairs are the training set.
    """

    pre: list
    suc: list
    num_train: int
    seed: int
    dedup: bool = False

    def __len__(self):
        return len(self.pre)

    @property
    def num_test(self):
        return len(self.pre) - self.num_train

    def pairs(self, split="all"):
        lo, hi = {"all": (0, len(self)), "train": (0, self.num_train), "test": (self.num_train, len(self))}[split]
        return list(zip(self.pre[lo:hi], self.suc[lo:hi]))


def generate_transitions(count, seed, split=0.9, dedup=False, walk_length=5):
    """Sample ``count`` transitions by short random walks from uniform random states.

    Each walk starts from a uniformly drawn reachable state and contributes
    its ``walk_length`` consecutive steps.  With ``dedup`` no (pre, suc) pair
    repeats anywhere, so train and test cannot share a pair.
    """
    if count <= 0:
        raise ValueError("count must be positive")
    if not 0 < split <= 1:
        raise ValueError("split must be in (0, 1]")
    rng = np.random.default_rng(seed)
    pre, suc, seen = [], [], set()
    while len(pre) < count:
        path = random_walk(random_state(rng), walk_length, rng, backtrack=True)
        for a, b in zip(path, path[1:]):
            if dedup:
                if (a, b) in seen:
                    continue
                seen.add((a, b))
            pre.append(a)
            suc.append(b)
            if len(pre) == count:
                break
    num_train = int(round(count * split))
    return TransitionSet(pre, suc, num_train, seed, dedup)


def make_instance(steps, seed):
    """(init, goal) with ``init`` a ``steps``-move walk away from the solved state.

    The walk does not revisit states, so for short walks its length is
    usually the optimal cost.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    rng = np.random.default_rng(seed)
    return random_walk(GOAL, steps, rng)[-1], GOAL


def optimal_cost(init, goal=GOAL):
    """Breadth-first distance between two states (None if unreachable)."""
    init, goal = tuple(init), tuple(goal)
    if init == goal:
        return 0
    frontier, seen, depth = [init], {init}, 0
    while frontier:
        depth += 1
        nxt = []
        for s in frontier:
            for t in successors(s):
                if t == goal:
                    return depth
                if t not in seen:
                    seen.add(t)
                    nxt.append(t)
        frontier = nxt
    return None


def reachable_states(start=GOAL):
    """All states reachable from ``start`` in breadth-first order (181440 for 3x3)."""
    start = tuple(start)
    order, seen = [start], {start}
    i = 0
    while i < len(order):
        for t in successors(order[i]):
            if t not in seen:
                seen.add(t)
                order.append(t)
        i += 1
    return order


def all_transitions(states=None):
    """Every legal (pre, suc) move among ``states`` (default: the full reachable space)."""
    states = reachable_states() if states is None else states
    return [(s, t) for s in states for t in successors(s)]


# ---------------------------------------------------------------------------
# Dataset files: <dir>/manifest.json + <dir>/payload.bin
#
# The payload holds little-endian float32 N x F blocks, row-major, one per
# state, in pair order pre_0, suc_0, pre_1, suc_1, ...


@dataclass
class Dataset:
    """Object matrices of transition pairs, shaped (pairs, 2, N, F)."""

    pairs: np.ndarray
    num_train: int
    seed: int = 0
    dedup: bool = False

    @classmethod
    def from_transitions(cls, ts: TransitionSet):
        pre = encode_states(ts.pre)
        suc = encode_states(ts.suc)
        return cls(np.stack([pre, suc], axis=1), ts.num_train, ts.seed, ts.dedup)

    @property
    def num_objects(self):
        return self.pairs.shape[2]

    @property
    def num_features(self):
        return self.pairs.shape[3]

    @property
    def train_pairs(self):
        return self.pairs[: self.num_train]

    @property
    def test_pairs(self):
        return self.pairs[self.num_train:]

    def states(self, split="train"):
        """All pre and suc matrices of a split, stacked as (2 * pairs, N, F)."""
        block = {"train": self.train_pairs, "test": self.test_pairs, "all": self.pairs}[split]
        return block.reshape(-1, self.num_objects, self.num_features)

    def manifest(self):
        return {
            "format_version": FORMAT_VERSION,
            "num_objects": self.num_objects,
            "num_features": self.num_features,
            "num_pairs": int(self.pairs.shape[0]),
            "num_states": int(self.pairs.shape[0] * 2),
            "train_pairs": int(self.num_train),
            "test_pairs": int(self.pairs.shape[0] - self.num_train),
            "seed": self.seed,
            "dedup": self.dedup,
            "payload": "payload.bin",
            "dtype": "<f4",
        }


def save_dataset(dataset: Dataset, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = dataset.manifest()
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    dataset.pairs.astype("<f4").tofile(directory / manifest["payload"])
    return directory


def load_dataset(directory):
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ValidationError(f"unsupported dataset format {manifest.get('format_version')}")
    n, f = manifest["num_objects"], manifest["num_features"]
    raw = np.fromfile(directory / manifest["payload"], dtype="<f4")
    expected = manifest["num_states"] * n * f
    if raw.size != expected:
        raise ValidationError(f"payload holds {raw.size} floats, manifest promises {expected}")
    pairs = raw.reshape(manifest["num_pairs"], 2, n, f).astype(np.float32)
    return Dataset(pairs, manifest["train_pairs"], manifest.get("seed", 0), manifest.get("dedup", False))
