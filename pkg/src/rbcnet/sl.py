"""Supervised stage: synthetic data generation, ingest with referee
validation, example construction from observation streams, training, and
exact-match evaluation.

Examples are built strictly from one player's recorded turn stream; the
opponent's half of the record is never read. Inputs are stored bit-packed
(720 bytes per frame) and stacks are assembled per batch, which keeps a
couple hundred thousand examples within desk-scale memory.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import torch

from .bots import BotSpec, build_bot
from .engine import BLACK, WHITE
from .net import AdamState, PolicyValueNet, adam_step_module, cross_entropy, value_loss
from .observe import (
    HISTORY_LENGTH,
    PACKED_FRAME_BYTES,
    PRE_MOVE,
    PRE_SENSE,
    ObservationHistory,
    encode_move_index,
    unpack_stacks,
)
from .records import GameRecord, read_jsonl, replay_errors, write_jsonl
from .runner import play_game

KIND_SENSE = 0
KIND_MOVE = 1


@dataclass
class TrainExample:
    """One supervised target; ``input`` is the (1800, 8, 8) stack."""

    input: np.ndarray
    kind: str  # "sense" | "move"
    target: int
    value_target: int


@dataclass
class ExampleSet:
    """Column-oriented example store over bit-packed frames.

    ``completed``/``presense``/``premove`` hold one row per recorded turn;
    stream s covers rows stream_start[s]..stream_start[s+1]. Example i is
    (stream[i], turn[i], kind[i]) with targets alongside.
    """

    completed: np.ndarray    # (T, 720) uint8
    presense: np.ndarray     # (T, 720) uint8
    premove: np.ndarray      # (T, 720) uint8
    stream_start: np.ndarray  # (S + 1,) int64
    ex_stream: np.ndarray    # (N,) int32
    ex_turn: np.ndarray      # (N,) int32  turn index within the stream
    ex_kind: np.ndarray      # (N,) int8   KIND_SENSE / KIND_MOVE
    ex_target: np.ndarray    # (N,) int32
    ex_value: np.ndarray     # (N,) int8
    ex_game: np.ndarray      # (N,) int32  game row for split bookkeeping
    game_ids: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.ex_kind)

    def assemble(self, indices) -> np.ndarray:
        """Gather (B, 1800, 8, 8) float32 stacks for the given examples."""
        indices = np.asarray(indices)
        streams = self.ex_stream[indices]
        turns = self.ex_turn[indices]
        base = self.stream_start[streams]
        # Rows of the 19 completed frames preceding each example's turn;
        # negative offsets fall on the appended zero row.
        offsets = np.arange(-(HISTORY_LENGTH - 1), 0)
        rows = base[:, None] + turns[:, None] + offsets[None, :]
        rows[turns[:, None] + offsets[None, :] < 0] = len(self.completed)
        completed = np.vstack([self.completed,
                               np.zeros((1, PACKED_FRAME_BYTES), dtype=np.uint8)])
        packed = np.empty((len(indices), HISTORY_LENGTH, PACKED_FRAME_BYTES), dtype=np.uint8)
        packed[:, :-1] = completed[rows]
        partial_rows = base + turns
        is_move = self.ex_kind[indices] == KIND_MOVE
        packed[:, -1] = np.where(is_move[:, None],
                                 self.premove[partial_rows],
                                 self.presense[partial_rows])
        return unpack_stacks(packed)

    def examples_for_games(self, game_rows) -> np.ndarray:
        mask = np.isin(self.ex_game, np.asarray(list(game_rows), dtype=np.int32))
        return np.nonzero(mask)[0]

    def example(self, index: int) -> TrainExample:
        return TrainExample(
            input=self.assemble([index])[0],
            kind="move" if self.ex_kind[index] == KIND_MOVE else "sense",
            target=int(self.ex_target[index]),
            value_target=int(self.ex_value[index]),
        )


def _stream_rows(color: int, turns, value_target: int, move_target: str):
    """Frames and targets for one player's stream. Reads only that stream."""
    hist = ObservationHistory(color)
    completed, presense, premove, sense_targets, move_targets = [], [], [], [], []
    for turn in turns:
        hist.begin_turn(turn.opp_capture)
        presense.append(np.packbits(hist._partial_frame(PRE_SENSE).reshape(-1)))
        hist.record_sense(turn.sense, turn.sense_result)
        premove.append(np.packbits(hist._partial_frame(PRE_MOVE).reshape(-1)))
        sense_targets.append(turn.sense)
        target_move = turn.requested_move if move_target == "requested" else (
            turn.taken_move if turn.taken_move is not None else turn.requested_move)
        move_targets.append(encode_move_index(target_move))
        hist.record_move(turn.taken_move, turn.capture_square, turn.was_illegal)
        completed.append(hist._frames[-1])
    return completed, presense, premove, sense_targets, move_targets, value_target


def make_examples(record: GameRecord, move_target: str = "requested") -> list:
    """Per player per turn: one sense and one move example (contract view)."""
    exset = build_example_set([record], move_target=move_target)
    return [exset.example(i) for i in range(len(exset))]


def build_example_set(records, move_target: str = "requested") -> ExampleSet:
    if move_target not in ("requested", "taken"):
        raise ValueError(f"move_target must be 'requested' or 'taken', got {move_target!r}")
    completed, presense, premove = [], [], []
    stream_start = [0]
    ex_stream, ex_turn, ex_kind, ex_target, ex_value, ex_game = [], [], [], [], [], []
    game_ids = []
    stream = 0
    for game_row, record in enumerate(records):
        game_ids.append(record.game_id)
        for color in (WHITE, BLACK):
            rows = _stream_rows(color, record.turns[color],
                                record.value_target(color), move_target)
            comp, pre_s, pre_m, sense_t, move_t, value = rows
            for t in range(len(comp)):
                for kind, target in ((KIND_SENSE, sense_t[t]), (KIND_MOVE, move_t[t])):
                    ex_stream.append(stream)
                    ex_turn.append(t)
                    ex_kind.append(kind)
                    ex_target.append(target)
                    ex_value.append(value)
                    ex_game.append(game_row)
            completed.extend(comp)
            presense.extend(pre_s)
            premove.extend(pre_m)
            stream_start.append(stream_start[-1] + len(comp))
            stream += 1
    if not completed:
        empty_rows = np.zeros((0, PACKED_FRAME_BYTES), dtype=np.uint8)
        return ExampleSet(empty_rows, empty_rows.copy(), empty_rows.copy(),
                          np.array(stream_start, dtype=np.int64),
                          *(np.zeros(0, dtype=d) for d in
                            (np.int32, np.int32, np.int8, np.int32, np.int8, np.int32)),
                          game_ids=game_ids)
    return ExampleSet(
        completed=np.vstack(completed).astype(np.uint8),
        presense=np.vstack(presense).astype(np.uint8),
        premove=np.vstack(premove).astype(np.uint8),
        stream_start=np.array(stream_start, dtype=np.int64),
        ex_stream=np.array(ex_stream, dtype=np.int32),
        ex_turn=np.array(ex_turn, dtype=np.int32),
        ex_kind=np.array(ex_kind, dtype=np.int8),
        ex_target=np.array(ex_target, dtype=np.int32),
        ex_value=np.array(ex_value, dtype=np.int8),
        ex_game=np.array(ex_game, dtype=np.int32),
        game_ids=game_ids,
    )


# ---------------------------------------------------------------------------
# Ingest and split
# ---------------------------------------------------------------------------

def ingest(path, validate: bool = True):
    """Read a JSONL file into referee-validated records.

    Returns (records, rejected) where rejected is a list of (game_id,
    reasons). Records failing replay are excluded from the dataset.
    """
    records, rejected = [], []
    for record in read_jsonl(path):
        if validate:
            errors = replay_errors(record)
            if errors:
                rejected.append((record.game_id, errors))
                continue
        records.append(record)
    return records, rejected


def split_games(n_games: int, fraction: float, seed: int):
    """Deterministic game-level split; returns (train_rows, test_rows)."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    order = np.random.default_rng(seed).permutation(n_games)
    cut = int(round(n_games * fraction))
    return np.sort(order[:cut]), np.sort(order[cut:])


# ---------------------------------------------------------------------------
# Training and evaluation
# ---------------------------------------------------------------------------

@dataclass
class Metrics:
    split: str
    sense_accuracy: float
    move_accuracy: float
    sense_ce: float
    move_ce: float
    value_mse: float
    count: int

    def to_json(self) -> dict:
        return dict(self.__dict__)


def evaluate(net: PolicyValueNet, exset: ExampleSet, indices,
             batch_size: int = 256, split: str = "test") -> Metrics:
    """Exact-match argmax accuracy per head; no partial credit."""
    indices = np.asarray(indices)
    if len(indices) == 0:
        raise ValueError("cannot evaluate on an empty example set")
    sense_hits = move_hits = 0
    sense_n = move_n = 0
    sense_ce_sum = move_ce_sum = value_sq_sum = 0.0
    for lo in range(0, len(indices), batch_size):
        batch = indices[lo:lo + batch_size]
        stacks = exset.assemble(batch)
        sense_logits, move_logits, values = net.evaluate_np(stacks)
        kinds = exset.ex_kind[batch]
        targets = exset.ex_target[batch]
        value_t = exset.ex_value[batch].astype(np.float32)
        for row in range(len(batch)):
            logits = sense_logits[row] if kinds[row] == KIND_SENSE else move_logits[row]
            hit = int(np.argmax(logits)) == targets[row]
            z = logits - logits.max()
            ce = float(np.log(np.exp(z).sum()) - z[targets[row]])
            if kinds[row] == KIND_SENSE:
                sense_hits += hit
                sense_ce_sum += ce
                sense_n += 1
            else:
                move_hits += hit
                move_ce_sum += ce
                move_n += 1
        value_sq_sum += float(((values - value_t) ** 2).sum())
    return Metrics(
        split=split,
        sense_accuracy=sense_hits / max(sense_n, 1),
        move_accuracy=move_hits / max(move_n, 1),
        sense_ce=sense_ce_sum / max(sense_n, 1),
        move_ce=move_ce_sum / max(move_n, 1),
        value_mse=value_sq_sum / len(indices),
        count=len(indices),
    )


def majority_share(exset: ExampleSet, indices, kind: int = KIND_MOVE) -> float:
    """Frequency of the most common target among examples of one kind."""
    indices = np.asarray(indices)
    targets = exset.ex_target[indices][exset.ex_kind[indices] == kind]
    if len(targets) == 0:
        return 0.0
    return float(np.bincount(targets).max() / len(targets))


def _batch_loss(net, stacks, kinds, targets, value_targets):
    out = net(torch.from_numpy(stacks))
    kinds_t = torch.from_numpy(kinds.astype(np.int64))
    targets_t = torch.from_numpy(targets.astype(np.int64))
    sense_rows = torch.nonzero(kinds_t == KIND_SENSE).squeeze(1)
    move_rows = torch.nonzero(kinds_t == KIND_MOVE).squeeze(1)
    loss = value_loss(out.value, torch.from_numpy(value_targets.astype(np.float32))).mean()
    parts = {"value_mse": float(loss.detach())}
    if len(sense_rows):
        sense_ce = cross_entropy(out.sense_logits[sense_rows], targets_t[sense_rows]).mean()
        loss = loss + sense_ce
        parts["sense_ce"] = float(sense_ce.detach())
    if len(move_rows):
        move_ce = cross_entropy(out.move_logits[move_rows], targets_t[move_rows]).mean()
        loss = loss + move_ce
        parts["move_ce"] = float(move_ce.detach())
    return loss, parts


def train(net: PolicyValueNet, exset: ExampleSet, train_rows, test_rows,
          epochs: int = 5, batch_size: int = 256, lr: float = 1e-3, seed: int = 0,
          log=None, early_stop_patience: int = 2):
    """Minimize sense CE + move CE + value MSE with per-epoch shuffling.

    Stops early once the held-out loss has risen for ``early_stop_patience``
    consecutive epochs. Returns (net, history) where history carries one
    entry per epoch plus the pre-training evaluation.
    """
    train_idx = exset.examples_for_games(train_rows)
    test_idx = exset.examples_for_games(test_rows)
    if len(train_idx) == 0:
        raise ValueError("empty training set")
    rng = np.random.default_rng(seed)
    adam = AdamState(list(net.parameters()), lr=lr)
    history = {"epochs": [], "initial": None, "stopped_early": False}
    if len(test_idx):
        initial = evaluate(net, exset, test_idx, batch_size)
        history["initial"] = initial.to_json()
    prev_loss = None
    rises = 0
    for epoch in range(epochs):
        order = rng.permutation(len(train_idx))
        epoch_loss = 0.0
        batches = 0
        net.train()
        for lo in range(0, len(order), batch_size):
            rows = train_idx[order[lo:lo + batch_size]]
            stacks = exset.assemble(rows)
            loss, _ = _batch_loss(net, stacks, exset.ex_kind[rows],
                                  exset.ex_target[rows], exset.ex_value[rows])
            net.zero_grad()
            loss.backward()
            adam_step_module(net, adam)
            epoch_loss += float(loss.detach())
            batches += 1
        entry = {"epoch": epoch, "train_loss": epoch_loss / max(batches, 1)}
        if len(test_idx):
            metrics = evaluate(net, exset, test_idx, batch_size)
            entry["test"] = metrics.to_json()
            test_loss = metrics.sense_ce + metrics.move_ce + metrics.value_mse
            entry["test_loss"] = test_loss
            if prev_loss is not None and test_loss > prev_loss:
                rises += 1
            else:
                rises = 0
            prev_loss = test_loss
        history["epochs"].append(entry)
        if log:
            log(entry)
        if rises >= early_stop_patience:
            history["stopped_early"] = True
            break
    return net, history


# ---------------------------------------------------------------------------
# Synthetic data (stand-in for unavailable human games)
# ---------------------------------------------------------------------------

def gen_synthetic(out_path, n_games: int, seed: int, bot_kinds=("greedy", "random"),
                  turn_cap: int = 60) -> int:
    """Referee-driven scripted-bot games in the record format.

    Pairings cycle through the ordered product of ``bot_kinds``; every game
    draws its own rng streams from (seed, game index), so the output file is
    byte-identical for a fixed seed.
    """
    if n_games < 1:
        raise ValueError("need at least one game")
    pairs = list(itertools.product(bot_kinds, repeat=2))

    def games():
        for i in range(n_games):
            white_kind, black_kind = pairs[i % len(pairs)]
            streams = np.random.SeedSequence(entropy=(seed, i)).spawn(2)
            white = build_bot(BotSpec(kind=white_kind), np.random.default_rng(streams[0]))
            black = build_bot(BotSpec(kind=black_kind), np.random.default_rng(streams[1]))
            record, _ = play_game(white, black, turn_cap=turn_cap,
                                  game_id=f"syn-{seed}-{i:06d}",
                                  names=(white_kind, black_kind), seed=i)
            yield record

    return write_jsonl(out_path, games())
