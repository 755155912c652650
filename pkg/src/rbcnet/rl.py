"""Self-play reinforcement stage.

The trainer plays pool-sampled frozen snapshots of itself (argmax), sampling
both of its own heads. Only the terminal signal is rewarded: the winning
move and the sense just before it get +1 (symmetrically -1 on a loss), and
GAE propagates credit backwards through the value head, which starts from
the supervised checkpoint. Updates are clipped-surrogate PPO with separate
sense/move losses summed.

Episode collection is batched: many games run concurrently and pending
decisions are grouped into one forward pass per network. All player-side
state goes through ObservationHistory, so trajectories are computable from
player-visible events alone.
"""

from __future__ import annotations

import json
import time
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from . import engine as eng
from .engine import BLACK, WHITE, GameResult, Move
from .net import (
    AdamState,
    PolicyValueNet,
    adam_step_module,
    argmax_action,
    load_checkpoint,
    net_from_checkpoint,
    net_to_checkpoint,
    sample_action,
    save_checkpoint,
)
from .observe import (
    PRE_MOVE,
    PRE_SENSE,
    EncodingError,
    ObservationHistory,
    decode_move_index,
    unpack_stacks,
)
from .runner import GameDriver, Player, SENSE_PHASE

HEAD_SENSE = 0
HEAD_MOVE = 1


@dataclass
class PPOConfig:
    clip_eps: float = 0.2
    gamma: float = 0.997
    lam: float = 0.95
    update_epochs: int = 4
    minibatch_size: int = 256
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    lr: float = 3e-4
    games_per_iter: int = 64
    snapshot_threshold: float = 0.65
    snapshot_window: int = 500  # K most recent results
    warmup_games: int = 100
    turn_cap: int = 60
    temperature: float = 1.0
    max_parallel: int = 32
    normalize_advantages: bool = True
    max_iterations: int = 50
    time_budget_s: Optional[float] = None
    checkpoint_every: int = 10
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.clip_eps < 1.0:
            raise ValueError("clip_eps must be in (0, 1)")
        for name in ("gamma", "lam"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must be in (0, 1]")


@dataclass
class EpisodeBuffer:
    """Column store of one episode's trainer decisions, in order."""

    packed: list = field(default_factory=list)     # (20, 720) uint8 per step
    head: list = field(default_factory=list)       # HEAD_SENSE / HEAD_MOVE
    action: list = field(default_factory=list)
    logprob: list = field(default_factory=list)
    value_pred: list = field(default_factory=list)
    reward: list = field(default_factory=list)
    advantage: list = field(default_factory=list)
    return_: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.head)

    def append(self, packed, head, action, logprob, value_pred) -> None:
        self.packed.append(packed)
        self.head.append(head)
        self.action.append(action)
        self.logprob.append(logprob)
        self.value_pred.append(value_pred)
        self.reward.append(0.0)


def assign_rewards(buffer: EpisodeBuffer, result: GameResult, trainer_color: int) -> None:
    """Terminal signal only: the final (sense, move) pair gets +-1, draws 0."""
    buffer.reward = [0.0] * len(buffer)
    if result.winner is None or len(buffer) == 0:
        return
    sign = 1.0 if result.winner == trainer_color else -1.0
    assert buffer.head[-1] == HEAD_MOVE and buffer.head[-2] == HEAD_SENSE, \
        "episode must end with the trainer's (sense, move) pair"
    buffer.reward[-1] = sign
    buffer.reward[-2] = sign


def compute_gae(buffer: EpisodeBuffer, gamma: float, lam: float) -> None:
    """Raw advantages and returns over the decision sequence (terminal V=0).

    Any cross-buffer normalization is the updater's business; the values
    stored here are the plain estimator outputs.
    """
    n = len(buffer)
    advantages = [0.0] * n
    running = 0.0
    for t in range(n - 1, -1, -1):
        next_value = buffer.value_pred[t + 1] if t + 1 < n else 0.0
        delta = buffer.reward[t] + gamma * next_value - buffer.value_pred[t]
        running = delta + gamma * lam * running
        advantages[t] = running
    buffer.advantage = advantages
    buffer.return_ = [a + v for a, v in zip(advantages, buffer.value_pred)]


@dataclass
class TrajectoryStep:
    """Contract view of one recorded decision."""

    input: np.ndarray
    head: str
    action: int
    logprob: float
    value_pred: float
    reward: float
    advantage: float
    return_: float


def trajectory_steps(buffer: EpisodeBuffer) -> list:
    steps = []
    for i in range(len(buffer)):
        steps.append(TrajectoryStep(
            input=unpack_stacks(buffer.packed[i][None])[0],
            head="sense" if buffer.head[i] == HEAD_SENSE else "move",
            action=buffer.action[i],
            logprob=buffer.logprob[i],
            value_pred=buffer.value_pred[i],
            reward=buffer.reward[i],
            advantage=buffer.advantage[i] if buffer.advantage else 0.0,
            return_=buffer.return_[i] if buffer.return_ else 0.0,
        ))
    return steps


# ---------------------------------------------------------------------------
# Opponent pool (Eq. 1 sampling, K-window win rates, 65% snapshot rule)
# ---------------------------------------------------------------------------

class OpponentPool:
    """Frozen snapshots with per-opponent moving win rates.

    The probability of drawing snapshot i is (1 - w_i / sum_j w_j),
    normalized by (n - 1) so the weights form a distribution; a singleton
    pool is drawn with probability 1 and an all-zero w vector falls back to
    uniform. Unplayed snapshots carry a 0.5 prior.
    """

    def __init__(self, window: int = 500):
        self.window = window
        self.snapshots: list = []          # ids, insertion order
        self.checkpoints: dict = {}        # id -> Checkpoint
        self.results: dict = {}            # id -> deque of scores
        self._nets: dict = {}              # id -> cached frozen net

    def __len__(self) -> int:
        return len(self.snapshots)

    def add(self, snapshot_id: str, checkpoint) -> None:
        if snapshot_id in self.checkpoints:
            raise ValueError(f"duplicate snapshot id {snapshot_id!r}")
        self.snapshots.append(snapshot_id)
        self.checkpoints[snapshot_id] = checkpoint
        self.results[snapshot_id] = deque(maxlen=self.window)

    def net(self, snapshot_id: str) -> PolicyValueNet:
        if snapshot_id not in self._nets:
            frozen = net_from_checkpoint(self.checkpoints[snapshot_id])
            frozen.eval()
            for p in frozen.parameters():
                p.requires_grad_(False)
            self._nets[snapshot_id] = frozen
        return self._nets[snapshot_id]

    def win_rate(self, snapshot_id: str) -> float:
        bucket = self.results[snapshot_id]
        if not bucket:
            return 0.5  # prior until any game lands
        return float(sum(bucket) / len(bucket))

    def probabilities(self) -> np.ndarray:
        if not self.snapshots:
            raise ValueError("empty opponent pool")
        n = len(self.snapshots)
        if n == 1:
            return np.array([1.0])
        w = np.array([self.win_rate(s) for s in self.snapshots])
        total = w.sum()
        if total == 0.0:
            return np.full(n, 1.0 / n)
        weights = 1.0 - w / total
        return weights / (n - 1)

    def sample_opponent(self, rng: np.random.Generator) -> str:
        probs = self.probabilities()
        return self.snapshots[int(rng.choice(len(probs), p=probs))]

    def record_result(self, snapshot_id: str, score: float) -> None:
        if snapshot_id not in self.results:
            raise KeyError(f"unknown snapshot {snapshot_id!r}")
        self.results[snapshot_id].append(score)


def maybe_snapshot(pool: OpponentPool, trainer_net: PolicyValueNet,
                   recent: deque, config: PPOConfig, games_played: int) -> Optional[str]:
    """Freeze the trainer into the pool once its aggregate recent win rate
    over at least ``warmup_games`` pool games reaches the snapshot threshold.
    Resets the aggregate window on snapshot."""
    if len(recent) < config.warmup_games:
        return None
    rate = sum(recent) / len(recent)
    if rate < config.snapshot_threshold:
        return None
    snapshot_id = f"snap-{len(pool):03d}-g{games_played}"
    pool.add(snapshot_id, net_to_checkpoint(
        trainer_net, meta={"games": games_played, "snapshot": snapshot_id}))
    recent.clear()
    return snapshot_id


# ---------------------------------------------------------------------------
# Batched episode running
# ---------------------------------------------------------------------------

class _NetSeat:
    """A seat driven by a network, optionally recording a trajectory."""

    def __init__(self, net_key: str, mode: str, temperature: float,
                 rng: np.random.Generator, record: bool):
        self.net_key = net_key
        self.mode = mode
        self.temperature = temperature
        self.rng = rng
        self.record = record
        self.buffer = EpisodeBuffer() if record else None
        self.color: Optional[int] = None
        self.hist: Optional[ObservationHistory] = None
        self._stack: Optional[np.ndarray] = None

    def start(self, color: int) -> None:
        self.color = color
        self.hist = ObservationHistory(color)

    def begin(self, notice: Optional[int]) -> None:
        self.hist.begin_turn(notice)

    def stack_for(self, stage: str) -> np.ndarray:
        self._stack = self.hist.packed_stack(PRE_SENSE if stage == SENSE_PHASE else PRE_MOVE)
        return self._stack

    def _select(self, logits: np.ndarray) -> tuple:
        if self.mode == "argmax":
            action = argmax_action(logits)
        else:
            action = sample_action(logits, self.temperature, self.rng)
        z = logits.astype(np.float64) / self.temperature
        z = z - z.max()
        logprob = float(z[action] - np.log(np.exp(z).sum()))
        return action, logprob

    def decide_sense(self, sense_logits, value) -> int:
        action, logprob = self._select(sense_logits)
        if self.record:
            self.buffer.append(self._stack, HEAD_SENSE, action, logprob, float(value))
        return action

    def decide_move(self, move_logits, value) -> Move:
        action, logprob = self._select(move_logits)
        if self.record:
            self.buffer.append(self._stack, HEAD_MOVE, action, logprob, float(value))
        try:
            return decode_move_index(action, self.color,
                                     self.hist.own_bitboards()[eng.PAWN])
        except EncodingError:
            return eng.NULL_MOVE  # off-board index: an always-illegal request

    def on_sense_result(self, center, revealed) -> None:
        self.hist.record_sense(center, revealed)

    def on_move_result(self, taken, capture_square, was_illegal) -> None:
        self.hist.record_move(taken, capture_square, was_illegal)


class _PlayerSeat:
    """Adapter running a scripted Player inline (no batching needed)."""

    def __init__(self, player: Player):
        self.player = player
        self.net_key = None

    def start(self, color: int) -> None:
        self.player.handle_game_start(color)

    def begin(self, notice) -> None:
        self.player.handle_opponent_capture(notice)

    def act_inline(self, driver: GameDriver) -> None:
        center = self.player.choose_sense()
        outcome = driver.apply_sense(center)
        self.player.handle_sense_result(center, outcome.revealed)
        move = self.player.choose_move()
        result = driver.apply_move(move)
        self.player.handle_move_result(result.taken_move, result.capture_square,
                                       result.was_illegal)


@dataclass
class GameJob:
    seats: dict          # color -> seat
    turn_cap: int
    tag: object = None   # caller bookkeeping (opponent id, colors, ...)


@dataclass
class FinishedGame:
    tag: object
    result: GameResult
    record: object
    seats: dict
    plies: int


def run_games(jobs, nets: dict, max_parallel: int = 32):
    """Run many games, batching every pending net decision per network.

    Deterministic: games are admitted and stepped in index order, and each
    seat owns its rng stream. Returns FinishedGame entries in job order.
    """
    queue = list(enumerate(jobs))
    queue.reverse()
    active: list = []
    finished: dict = {}

    def admit():
        while len(active) < max_parallel and queue:
            index, job = queue.pop()
            driver = GameDriver(turn_cap=job.turn_cap, game_id=f"rl-{index}")
            for color in (WHITE, BLACK):
                job.seats[color].start(color)
            active.append((index, job, driver))

    admit()
    while active:
        requests = {}  # net_key -> list of (driver, seat, stage)
        still_active = []
        for index, job, driver in active:
            while driver.result is None:
                seat = job.seats[driver.to_act]
                if not driver._turn_open:
                    seat.begin(driver.begin_turn())
                if isinstance(seat, _PlayerSeat):
                    seat.act_inline(driver)
                    continue
                requests.setdefault(seat.net_key, []).append((driver, seat, driver.phase))
                break
            if driver.result is not None:
                finished[index] = FinishedGame(
                    tag=job.tag, result=driver.result, record=driver.record,
                    seats=job.seats,
                    plies=len(driver.record.turns[WHITE]) + len(driver.record.turns[BLACK]))
            else:
                still_active.append((index, job, driver))
        active = still_active
        admit()
        for net_key, batch in requests.items():
            stacks = unpack_stacks(np.stack([seat.stack_for(stage)
                                             for _, seat, stage in batch]))
            sense_logits, move_logits, values = nets[net_key].evaluate_np(stacks)
            for row, (driver, seat, stage) in enumerate(batch):
                if stage == SENSE_PHASE:
                    center = seat.decide_sense(sense_logits[row], values[row])
                    outcome = driver.apply_sense(center)
                    seat.on_sense_result(center, outcome.revealed)
                else:
                    move = seat.decide_move(move_logits[row], values[row])
                    outcome = driver.apply_move(move)
                    seat.on_move_result(outcome.taken_move, outcome.capture_square,
                                        outcome.was_illegal)
    return [finished[i] for i in sorted(finished)]


def play_episode(trainer_net: PolicyValueNet, opponent_net: PolicyValueNet,
                 rng: np.random.Generator, trainer_color: int = WHITE,
                 turn_cap: int = 60, temperature: float = 1.0):
    """One self-play game: trainer samples, opponent plays argmax.

    Returns (EpisodeBuffer, GameResult). Trainer decisions are recorded with
    their logprobs and value predictions, in order (sense, move per turn).
    """
    trainer_seat = _NetSeat("trainer", "sample", temperature, rng, record=True)
    opponent_seat = _NetSeat("opponent", "argmax", 1.0, rng, record=False)
    seats = {trainer_color: trainer_seat, eng.opponent(trainer_color): opponent_seat}
    job = GameJob(seats=seats, turn_cap=turn_cap)
    done = run_games([job], {"trainer": trainer_net, "opponent": opponent_net},
                     max_parallel=1)[0]
    return trainer_seat.buffer, done.result


# ---------------------------------------------------------------------------
# PPO update
# ---------------------------------------------------------------------------

def _batch_columns(buffers):
    packed = np.stack([p for b in buffers for p in b.packed])
    return {
        "packed": packed,
        "head": np.array([h for b in buffers for h in b.head], dtype=np.int64),
        "action": np.array([a for b in buffers for a in b.action], dtype=np.int64),
        "logprob": np.array([l for b in buffers for l in b.logprob], dtype=np.float32),
        "advantage": np.array([a for b in buffers for a in b.advantage], dtype=np.float32),
        "return": np.array([r for b in buffers for r in b.return_], dtype=np.float32),
    }


def ppo_update(net: PolicyValueNet, buffers, config: PPOConfig,
               adam: Optional[AdamState] = None, rng: Optional[np.random.Generator] = None):
    """Clipped-surrogate update over collected episodes.

    Per minibatch: the probability ratio is taken on each step's own head;
    sense-step and move-step surrogate losses are computed separately and
    summed, plus value_coef * value MSE minus entropy_coef * head entropies.
    Returns summary statistics of the last epoch.
    """
    buffers = [b for b in buffers if len(b)]
    if not buffers:
        raise ValueError("no trajectory steps to update on")
    adam = adam or AdamState(list(net.parameters()), lr=config.lr)
    rng = rng or np.random.default_rng(config.seed)
    cols = _batch_columns(buffers)
    n = len(cols["head"])
    advantages = cols["advantage"].copy()
    if config.normalize_advantages and n > 1:
        advantages = (advantages - advantages.mean()) / max(float(advantages.std()), 1e-8)
    stats = {}
    net.train()
    for _ in range(config.update_epochs):
        order = rng.permutation(n)
        epoch_stats = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0,
                       "clip_fraction": 0.0, "batches": 0}
        for lo in range(0, n, config.minibatch_size):
            rows = order[lo:lo + config.minibatch_size]
            stacks = torch.from_numpy(unpack_stacks(cols["packed"][rows]))
            head = torch.from_numpy(cols["head"][rows])
            action = torch.from_numpy(cols["action"][rows])
            old_logprob = torch.from_numpy(cols["logprob"][rows])
            adv = torch.from_numpy(advantages[rows])
            ret = torch.from_numpy(cols["return"][rows])

            out = net(stacks)
            total = torch.zeros(())
            entropy_total = torch.zeros(())
            clipped_flags = []
            policy_total = torch.zeros(())
            for head_id, logits in ((HEAD_SENSE, out.sense_logits),
                                    (HEAD_MOVE, out.move_logits)):
                rows_h = torch.nonzero(head == head_id).squeeze(1)
                if not len(rows_h):
                    continue
                scaled = logits[rows_h] / config.temperature
                logprobs = scaled - torch.logsumexp(scaled, dim=1, keepdim=True)
                new_logprob = logprobs.gather(1, action[rows_h].unsqueeze(1)).squeeze(1)
                ratio = torch.exp(new_logprob - old_logprob[rows_h])
                surr1 = ratio * adv[rows_h]
                surr2 = torch.clamp(ratio, 1 - config.clip_eps, 1 + config.clip_eps) \
                    * adv[rows_h]
                policy_loss = -torch.minimum(surr1, surr2).mean()
                probs = torch.exp(logprobs)
                entropy = -(probs * logprobs).sum(dim=1).mean()
                policy_total = policy_total + policy_loss
                entropy_total = entropy_total + entropy
                clipped_flags.append((surr2 < surr1).float())
            v_loss = ((out.value - ret) ** 2).mean()
            total = policy_total + config.value_coef * v_loss \
                - config.entropy_coef * entropy_total
            if not torch.isfinite(total):
                raise FloatingPointError("non-finite PPO loss")
            net.zero_grad()
            total.backward()
            adam_step_module(net, adam)
            epoch_stats["policy_loss"] += float(policy_total.detach())
            epoch_stats["value_loss"] += float(v_loss.detach())
            epoch_stats["entropy"] += float(entropy_total.detach())
            if clipped_flags:
                epoch_stats["clip_fraction"] += float(torch.cat(clipped_flags).mean())
            epoch_stats["batches"] += 1
        stats = {k: v / max(epoch_stats["batches"], 1) for k, v in epoch_stats.items()
                 if k != "batches"}
        stats["steps"] = n
    return stats


# ---------------------------------------------------------------------------
# Matchup evaluation
# ---------------------------------------------------------------------------

def eval_matchup(seat_a, seat_b, games: int, seed: int, turn_cap: int = 60,
                 max_parallel: int = 32, mode: str = "argmax",
                 temperature: float = 1.0) -> float:
    """Score of A over color-alternating games: (wins + draws/2) / n.

    Seats are PolicyValueNet instances or Player factories
    (callable(rng) -> Player) for scripted opponents. Default play is argmax
    on both sides; note that argmax net-vs-net games are deterministic given
    colors, so use mode="sample" when independent games are needed for
    statistics.
    """
    if games < 1:
        raise ValueError("need at least one game")
    nets = {}

    def make_seat(side, key, rng):
        if isinstance(side, PolicyValueNet):
            nets[key] = side
            return _NetSeat(key, mode, temperature, rng, record=False)
        return _PlayerSeat(side(rng))

    jobs = []
    for i in range(games):
        streams = np.random.SeedSequence(entropy=(seed, i)).spawn(2)
        rng_a = np.random.default_rng(streams[0])
        rng_b = np.random.default_rng(streams[1])
        a_color = WHITE if i % 2 == 0 else BLACK
        seats = {a_color: make_seat(seat_a, "a", rng_a),
                 eng.opponent(a_color): make_seat(seat_b, "b", rng_b)}
        jobs.append(GameJob(seats=seats, turn_cap=turn_cap, tag=a_color))
    score = 0.0
    for done in run_games(jobs, nets, max_parallel=max_parallel):
        score += done.result.score_for(done.tag)
    return score / games


# ---------------------------------------------------------------------------
# Full training loop
# ---------------------------------------------------------------------------

def train_rl(sl_checkpoint_path, out_dir, config: PPOConfig, log=None):
    """PPO self-play from a supervised checkpoint. Writes checkpoints and a
    metrics JSONL into out_dir; returns (final net, summary dict)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sl_ckpt = load_checkpoint(sl_checkpoint_path)
    trainer = net_from_checkpoint(sl_ckpt)
    pool = OpponentPool(window=config.snapshot_window)
    pool.add("sl-seed", sl_ckpt)
    adam = AdamState(list(trainer.parameters()), lr=config.lr)
    rng = np.random.default_rng(config.seed)
    recent: deque = deque(maxlen=config.snapshot_window)
    games_played = 0
    start = time.time()
    metrics_path = out_dir / "metrics.jsonl"
    (out_dir / "config.json").write_text(json.dumps(asdict(config), indent=2))
    summary = {"iterations": 0, "games": 0, "snapshots": []}

    with open(metrics_path, "a", encoding="utf-8") as metrics_fh:
        for iteration in range(config.max_iterations):
            if config.time_budget_s is not None \
                    and time.time() - start > config.time_budget_s:
                break
            jobs = []
            for g in range(config.games_per_iter):
                opponent_id = pool.sample_opponent(rng)
                trainer_color = WHITE if (games_played + g) % 2 == 0 else BLACK
                seat_rng = np.random.default_rng(
                    np.random.SeedSequence(entropy=(config.seed, iteration, g)))
                seats = {
                    trainer_color: _NetSeat("trainer", "sample", config.temperature,
                                            seat_rng, record=True),
                    eng.opponent(trainer_color): _NetSeat(
                        f"opp:{opponent_id}", "argmax", 1.0, seat_rng, record=False),
                }
                jobs.append(GameJob(seats=seats, turn_cap=config.turn_cap,
                                    tag=(trainer_color, opponent_id)))
            nets = {"trainer": trainer}
            for _, opponent_id in (job.tag for job in jobs):
                nets.setdefault(f"opp:{opponent_id}", pool.net(opponent_id))

            trainer.eval()
            done = run_games(jobs, nets, max_parallel=config.max_parallel)
            buffers = []
            iter_score = 0.0
            plies = 0
            for game in done:
                trainer_color, opponent_id = game.tag
                score = game.result.score_for(trainer_color)
                iter_score += score
                plies += game.plies
                pool.record_result(opponent_id, score)
                recent.append(score)
                buffer = game.seats[trainer_color].buffer
                assign_rewards(buffer, game.result, trainer_color)
                compute_gae(buffer, config.gamma, config.lam)
                buffers.append(buffer)
            games_played += len(done)
            new_snapshot = maybe_snapshot(pool, trainer, recent, config, games_played)
            if new_snapshot:
                summary["snapshots"].append(new_snapshot)
            stats = ppo_update(trainer, buffers, config, adam, rng)
            entry = {
                "iteration": iteration,
                "games": games_played,
                "iter_win_rate": iter_score / len(done),
                "recent_win_rate": sum(recent) / len(recent) if recent else None,
                "mean_plies": plies / len(done),
                "pool": {s: pool.win_rate(s) for s in pool.snapshots},
                "new_snapshot": new_snapshot,
                "elapsed_s": time.time() - start,
                **stats,
            }
            metrics_fh.write(json.dumps(entry) + "\n")
            metrics_fh.flush()
            if log:
                log(entry)
            if config.checkpoint_every and (iteration + 1) % config.checkpoint_every == 0:
                save_checkpoint(out_dir / f"iter-{iteration + 1:04d}.ckpt",
                                net_to_checkpoint(trainer, adam,
                                                  meta={"games": games_played}))
            summary["iterations"] = iteration + 1
            summary["games"] = games_played
    final = out_dir / "final.ckpt"
    save_checkpoint(final, net_to_checkpoint(
        trainer, adam, meta={"games": games_played, "snapshot": "final"}))
    summary["final_checkpoint"] = str(final)
    summary["pool_size"] = len(pool)
    return trainer, summary
