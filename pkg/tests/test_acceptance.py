"""Acceptance suite: every shipped claim, one test per criterion.

Each test prints a single "[PASS] criterion -- detail" line (visible with
pytest -s or in the captured output). The training criteria chain through
session fixtures: synthetic data -> supervised checkpoint -> PPO run.
Budget on a single desktop core: the full module runs in roughly half an
hour, dominated by the supervised smoke (~17 min) and the bounded PPO run
(~6 min).
"""

import gc
import hashlib
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest
import torch
from scipy import stats

from rbcnet import engine as eng
from rbcnet import sl
from rbcnet.arena import run_match, wilson_interval
from rbcnet.bots import BotSpec, RandomBot
from rbcnet.engine import BLACK, WHITE
from rbcnet.naive_moves import naive_legal_moves
from rbcnet.net import (
    NetworkConfig,
    PolicyValueNet,
    gradient_check,
    load_checkpoint,
    net_from_checkpoint,
    net_to_checkpoint,
    save_checkpoint,
)
from rbcnet.observe import (
    FRAME_PLANES,
    MOVE_INDEX_COUNT,
    ObservationHistory,
    PRE_MOVE,
    PRE_SENSE,
    decode_move_index,
    encode_move_index,
)
from rbcnet.rl import (
    GameJob,
    OpponentPool,
    PPOConfig,
    _NetSeat,
    eval_matchup,
    run_games,
    train_rl,
)

from conftest import random_playout_states

torch.set_num_threads(1)

pytestmark = pytest.mark.slow

DATA_SEED = 20240401
DATA_GAMES = 2000
DATA_BOTS = ("greedy", "greedy", "random")
DATA_TURN_CAP = 60
SL_NET_SEED = 7
SL_TRAIN_SEED = 2
SL_EPOCHS = 3
PPO_SEED = 101
PPO_ITERATIONS = 12
EVAL_GAMES = 500


def report(name: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name} -- {detail}")
    assert ok, f"{name}: {detail}"


# ---------------------------------------------------------------------------
# Session fixtures: data -> SL -> RL
# ---------------------------------------------------------------------------

@pytest.fixture(scope="session")
def work_dir(tmp_path_factory) -> Path:
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="session")
def synthetic_data(work_dir):
    path = work_dir / "games.jsonl"
    t0 = time.time()
    count = sl.gen_synthetic(path, n_games=DATA_GAMES, seed=DATA_SEED,
                             bot_kinds=DATA_BOTS, turn_cap=DATA_TURN_CAP)
    return {"path": path, "count": count, "seconds": time.time() - t0}


@pytest.fixture(scope="session")
def sl_result(work_dir, synthetic_data):
    t0 = time.time()
    records, rejected = sl.ingest(synthetic_data["path"])
    assert rejected == [], "synthetic data must be referee-clean"
    exset = sl.build_example_set(records)
    train_rows, test_rows = sl.split_games(len(records), 0.9, seed=1)
    test_idx = exset.examples_for_games(test_rows)
    net = PolicyValueNet(NetworkConfig.desk_scale(seed=SL_NET_SEED))
    initial = sl.evaluate(net, exset, test_idx)
    net, history = sl.train(net, exset, train_rows, test_rows, epochs=SL_EPOCHS,
                            batch_size=256, lr=1e-3, seed=SL_TRAIN_SEED)
    final = sl.evaluate(net, exset, test_idx)
    ckpt_path = work_dir / "sl.ckpt"
    save_checkpoint(ckpt_path, net_to_checkpoint(
        net, meta={"stage": "sl", "snapshot": "sl"}))
    result = {
        "ckpt": ckpt_path,
        "initial_move_ce": initial.move_ce,
        "final": final.to_json(),
        "majority_move": sl.majority_share(exset, exset.examples_for_games(train_rows)),
        "examples": len(exset),
        "seconds": time.time() - t0,
        "epochs_run": len(history["epochs"]),
    }
    del exset, records
    gc.collect()
    return result


@pytest.fixture(scope="session")
def rl_result(work_dir, sl_result):
    t0 = time.time()
    config = PPOConfig(games_per_iter=64, max_iterations=PPO_ITERATIONS,
                       turn_cap=60, update_epochs=2, minibatch_size=256,
                       lr=3e-4, entropy_coef=0.01, warmup_games=100,
                       max_parallel=32, seed=PPO_SEED)
    rl_net, summary = train_rl(sl_result["ckpt"], work_dir / "rl", config)
    train_seconds = time.time() - t0
    sl_net = net_from_checkpoint(load_checkpoint(sl_result["ckpt"]))
    vs_random = eval_matchup(rl_net, RandomBot, games=EVAL_GAMES, seed=1001, turn_cap=60)
    sl_vs_random = eval_matchup(sl_net, RandomBot, games=EVAL_GAMES, seed=1001, turn_cap=60)
    vs_sl_argmax = eval_matchup(rl_net, sl_net, games=EVAL_GAMES, seed=1002, turn_cap=60)
    vs_sl_sampled = eval_matchup(rl_net, sl_net, games=EVAL_GAMES, seed=1003,
                                 turn_cap=60, mode="sample", temperature=1.0)
    return {
        "summary": summary,
        "train_seconds": train_seconds,
        "vs_random": vs_random,
        "sl_vs_random": sl_vs_random,
        "vs_sl_argmax": vs_sl_argmax,
        "vs_sl_sampled": vs_sl_sampled,
        "config": config,
    }


# ---------------------------------------------------------------------------
# Criteria
# ---------------------------------------------------------------------------

def test_criterion_engine_oracle_equivalence():
    t0 = time.time()
    initial_count = len(eng.legal_moves(eng.initial_state()))
    checked = 0
    for state in random_playout_states(seed=977, max_states=1000, junk_rate=0.1):
        assert set(eng.legal_moves(state)) == naive_legal_moves(state), eng.to_fen(state)
        checked += 1
    elapsed = time.time() - t0
    report("engine oracle equivalence",
           initial_count == 20 and checked == 1000 and elapsed < 60,
           f"initial position {initial_count} moves; {checked} playout positions "
           f"match the naive generator in {elapsed:.1f}s")


def test_criterion_sense_geometry():
    counts = {4: 0, 6: 0, 9: 0}
    state = eng.initial_state()
    for center in range(64):
        n = len(eng.apply_sense(state, center).revealed)
        counts[n] += 1
    g7 = len(eng.apply_sense(state, eng.parse_square("g7")).revealed)
    h8 = len(eng.apply_sense(state, eng.parse_square("h8")).revealed)
    ok = counts == {4: 4, 6: 24, 9: 36} and g7 == 9 and h8 == 4
    report("sense geometry", ok,
           f"corners/edges/interior = {counts[4]}/{counts[6]}/{counts[9]}; "
           f"g7 reveals {g7}, h8 reveals {h8}")


def test_criterion_encoding_budget():
    hist = ObservationHistory(WHITE)
    hist.begin_turn(None)
    stack = hist.encode_stack(PRE_SENSE)
    frames_checked = 0
    codec_checked = 0
    for state in random_playout_states(seed=978, max_states=1000, junk_rate=0.1):
        color = state.side_to_move
        pawns = state.piece_bb(color, eng.PAWN)
        for move in eng.legal_moves(state):
            index = encode_move_index(move)
            assert 0 <= index < MOVE_INDEX_COUNT
            assert decode_move_index(index, color, pawns) == move
            codec_checked += 1
        frames_checked += 1
    sample_frame = hist._partial_frame(PRE_SENSE)
    ok = (stack.shape == (1800, 8, 8) and sample_frame.shape == (FRAME_PLANES, 8, 8)
          and FRAME_PLANES == 90 and MOVE_INDEX_COUNT == 4673)
    report("encoding budget", ok,
           f"frame 90 planes, stack {stack.shape}, move space {MOVE_INDEX_COUNT}; "
           f"decode(encode) identity on {codec_checked} legal moves "
           f"across {frames_checked} positions")


def test_criterion_gradient_fidelity():
    t0 = time.time()
    result = gradient_check(batch=2, samples_per_param=120, seed=0)
    elapsed = time.time() - t0
    ok = result["max_rel_error"] < 1e-4 and elapsed < 60
    report("gradient fidelity", ok,
           f"max relative error {result['max_rel_error']:.2e} over "
           f"{result['checked']} coordinates (worst: {result['worst_param']}) "
           f"in {elapsed:.1f}s")


def test_criterion_supervised_smoke(synthetic_data, sl_result):
    move_acc = sl_result["final"]["move_accuracy"]
    uniform = 1.0 / MOVE_INDEX_COUNT
    majority = sl_result["majority_move"]
    ce_rel = abs(sl_result["initial_move_ce"] - math.log(4673)) / math.log(4673)
    minutes = (synthetic_data["seconds"] + sl_result["seconds"]) / 60
    ok = (synthetic_data["count"] == DATA_GAMES
          and move_acc >= 5 * uniform
          and move_acc > majority
          and ce_rel < 0.01
          and minutes < 30)
    report("supervised smoke", ok,
           f"{DATA_GAMES} games / {sl_result['examples']} examples, "
           f"{sl_result['epochs_run']} epochs in {minutes:.1f} min; "
           f"move accuracy {move_acc:.4f} vs uniform {uniform:.5f} (x{move_acc / uniform:.0f}) "
           f"and majority {majority:.4f}; initial move CE within {ce_rel * 100:.2f}% of ln 4673")


def test_criterion_pool_sampling():
    rng = np.random.default_rng(55)
    cases = {
        "n=1": [0.9],
        "n=2": [0.8, 0.2],
        "n=3": [0.5, 0.25, 0.25],
        "n=3 zero-w edge": [0.0, 0.0, 0.0],
    }
    details = []
    all_ok = True
    for label, rates in cases.items():
        pool = OpponentPool()
        net = PolicyValueNet(NetworkConfig.tiny(seed=0))
        for i, rate in enumerate(rates):
            sid = f"s{i}"
            pool.add(sid, net_to_checkpoint(net))
            pool.results[sid].extend([rate] * 20)
        expected = pool.probabilities()
        draws = 100_000
        counts = np.zeros(len(rates))
        for _ in range(draws):
            counts[pool.snapshots.index(pool.sample_opponent(rng))] += 1
        if len(rates) == 1:
            ok = counts[0] == draws
            p_value = 1.0
        else:
            p_value = stats.chisquare(counts, expected * draws).pvalue
            ok = p_value > 0.01
        all_ok &= ok
        details.append(f"{label} p={p_value:.3f}")
    report("pool sampling", all_ok, f"chi-square over 10^5 draws: {'; '.join(details)}")


def test_criterion_ppo_improvement(rl_result):
    vs_random = rl_result["vs_random"]
    vs_sl = rl_result["vs_sl_argmax"]
    vs_sl_sampled = rl_result["vs_sl_sampled"]
    low, _ = wilson_interval(vs_sl_sampled, EVAL_GAMES)
    hours = rl_result["train_seconds"] / 3600
    ok = (hours <= 2.0
          and vs_random >= 0.80
          and vs_sl >= 0.60
          and low > 0.5)
    report("ppo improvement", ok,
           f"bounded run {rl_result['summary']['games']} games in {hours:.2f}h, "
           f"pool grew to {rl_result['summary']['pool_size']}; "
           f"vs random {vs_random:.3f} (>=0.80; supervised alone {rl_result['sl_vs_random']:.3f}), "
           f"vs supervised argmax {vs_sl:.3f} (>=0.60), "
           f"sampled {vs_sl_sampled:.3f} with Wilson low {low:.3f} (>0.5) over {EVAL_GAMES} games")


def test_criterion_fog_purity(work_dir):
    # Trajectory side: stacks recorded during self-play must be identical to
    # stacks rebuilt afterwards from that player's recorded turn stream alone.
    net = PolicyValueNet(NetworkConfig.tiny(seed=1))
    seat = _NetSeat("n", "sample", 1.0, np.random.default_rng(3), record=True)
    opp = _NetSeat("n", "argmax", 1.0, np.random.default_rng(4), record=False)
    job = GameJob(seats={WHITE: seat, BLACK: opp}, turn_cap=12)
    done = run_games([job], {"n": net}, max_parallel=1)[0]
    buffer = seat.buffer
    hist = ObservationHistory(WHITE)
    step = 0
    trajectory_ok = True
    for turn in done.record.turns[WHITE]:
        hist.begin_turn(turn.opp_capture)
        trajectory_ok &= np.array_equal(buffer.packed[step], hist.packed_stack(PRE_SENSE))
        hist.record_sense(turn.sense, turn.sense_result)
        trajectory_ok &= np.array_equal(buffer.packed[step + 1], hist.packed_stack(PRE_MOVE))
        hist.record_move(turn.taken_move, turn.capture_square, turn.was_illegal)
        step += 2
    trajectory_ok &= step == len(buffer)

    # Bot side: nothing handed to a player references the referee state
    # (detailed reachability audit lives in the arena tests; rechecked here).
    from test_arena import TestFogPurity
    TestFogPurity().test_ground_state_unreachable_from_bot_inputs()

    # Service side: payloads before game_over replay cleanly through a
    # player-side tracker and never contain ground truth.
    from fastapi.testclient import TestClient
    from rbcnet.service import create_app
    from test_service import TestInformationHiding
    with TestClient(create_app(work_dir / "svc")) as client:
        client.app = None
        TestInformationHiding().test_scripted_game_payloads_derivable_from_own_stream(client)

    report("fog purity", trajectory_ok,
           f"{step} trajectory stacks rebuilt from the player stream bit-identically; "
           "bot inputs reference no referee state; service payloads pass the sniffer")


def test_criterion_determinism(work_dir):
    # gen-data
    a, b = work_dir / "det_a.jsonl", work_dir / "det_b.jsonl"
    sl.gen_synthetic(a, n_games=20, seed=99, turn_cap=30)
    sl.gen_synthetic(b, n_games=20, seed=99, turn_cap=30)
    gen_ok = hashlib.sha256(a.read_bytes()).digest() == hashlib.sha256(b.read_bytes()).digest()

    # train-sl in deterministic mode (single-threaded, fixed seeds)
    def tiny_sl_checkpoint(tag):
        records, _ = sl.ingest(a)
        exset = sl.build_example_set(records)
        net = PolicyValueNet(NetworkConfig.tiny(seed=5))
        sl.train(net, exset, train_rows=range(18), test_rows=range(18, 20),
                 epochs=1, batch_size=64, lr=1e-3, seed=6)
        path = work_dir / f"det_{tag}.ckpt"
        save_checkpoint(path, net_to_checkpoint(net, meta={"stage": "sl"}))
        return path.read_bytes()

    sl_ok = tiny_sl_checkpoint("x") == tiny_sl_checkpoint("y")

    # run_match
    spec = BotSpec(kind="greedy")
    m1 = run_match(spec, BotSpec(kind="random"), 6, seed=17, turn_cap=30).to_json()
    m2 = run_match(spec, BotSpec(kind="random"), 6, seed=17, turn_cap=30).to_json()
    match_ok = m1 == m2

    report("determinism", gen_ok and sl_ok and match_ok,
           f"gen-data bytes {'equal' if gen_ok else 'differ'}; "
           f"train-sl checkpoints {'bit-identical' if sl_ok else 'differ'}; "
           f"run_match reports {'equal' if match_ok else 'differ'}")
