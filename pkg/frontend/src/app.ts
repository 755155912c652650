// Play-flow wiring: lobby -> live game loop -> replay browser.
//
// Live play follows the strict per-turn sequence: capture notice arrives in
// the event feed, hovering previews the clipped 3x3 sense window, a click
// commits the sense, then click-click enters a move (with a promotion
// picker when a pawn reaches the last rank) or the Pass button completes
// the turn without moving. Out-of-turn input is simply not wired up.

import { ApiError, GameApi, type SeatSpec } from './api.js';
import { emptyBoardModel, renderBoard, type BoardModel } from './board.js';
import {
  applyState,
  describeResult,
  emptyView,
  rememberedAge,
  type ClientGameView,
} from './state.js';
import { ReplayController, describePly } from './replay.js';
import type { Color, StatePayload } from './types.js';
import { parseSquare, senseWindow } from './types.js';

const api = new GameApi('');

interface LiveGame {
  gameId: string;
  token: string;
  view: ClientGameView;
  selected: string | null;
  hover: string | null;
  polling: boolean;
}

let live: LiveGame | null = null;
let replay: ReplayController | null = null;

const $ = (id: string) => document.getElementById(id)!;

// -- board model assembly ----------------------------------------------------

function liveBoardModel(game: LiveGame): BoardModel {
  const view = game.view;
  const model = emptyBoardModel(view.color);
  for (const [sq, piece] of view.ownPieces) {
    model.cells.set(sq, { piece, kind: 'own' });
  }
  for (const [sq, entry] of view.remembered) {
    if (!view.ownPieces.has(sq)) {
      model.cells.set(sq, {
        piece: entry.piece, kind: 'remembered',
        age: rememberedAge(view, sq) ?? undefined,
      });
    }
  }
  model.lastWindow = view.lastSenseWindow;
  model.oppCapture = view.oppCaptureMarker;
  model.myCapture = view.myCaptureMarker;
  model.selected = game.selected;
  if (view.phase === 'awaiting_sense' && game.hover) {
    model.senseHover = senseWindow(game.hover);
  }
  if (view.lastMoveTruncated && view.lastTakenMove) {
    model.truncatedTo = view.lastTakenMove.slice(2, 4);
  }
  model.interactive = view.yourTurn && view.phase !== 'finished';
  return model;
}

// -- rendering ----------------------------------------------------------------

function renderFeed(view: ClientGameView): void {
  const feed = $('feed');
  feed.innerHTML = '';
  for (const line of view.feed.slice(-40)) {
    const div = document.createElement('div');
    div.className = 'feed-line';
    div.textContent = `T${line.turn}: ${line.text}`;
    feed.appendChild(div);
  }
  feed.scrollTop = feed.scrollHeight;
}

function renderLive(): void {
  if (!live) return;
  const view = live.view;
  renderBoard($('board'), liveBoardModel(live), {
    onSquareClick: onSquare,
    onSquareHover: (sq) => {
      if (live && live.view.phase === 'awaiting_sense') {
        live.hover = sq;
        renderLive();
      }
    },
  });
  const phase = $('phase');
  if (view.phase === 'finished') {
    phase.textContent = describeResult(view);
    phase.className = 'banner ' +
      (view.result?.winner === view.color ? 'win'
        : view.result?.winner == null ? 'draw' : 'loss');
    $('replay-current').classList.remove('hidden');
  } else if (!view.yourTurn) {
    phase.textContent = 'waiting for opponent...';
    phase.className = 'banner waiting';
  } else {
    phase.textContent = view.phase === 'awaiting_sense'
      ? `turn ${view.turn}: click a square to sense (3x3 reveal)`
      : `turn ${view.turn}: enter a move or pass`;
    phase.className = 'banner active';
  }
  ($('pass-btn') as HTMLButtonElement).disabled =
    !(view.yourTurn && view.phase === 'awaiting_move');
  renderFeed(view);
}

// -- input --------------------------------------------------------------------

function onSquare(square: string): void {
  if (!live || !live.view.yourTurn) return;
  const view = live.view;
  if (view.phase === 'awaiting_sense') {
    void submitSense(square);
  } else if (view.phase === 'awaiting_move') {
    if (live.selected === null) {
      if (view.ownPieces.has(square)) {
        live.selected = square;
        renderLive();
      }
    } else if (square === live.selected) {
      live.selected = null;
      renderLive();
    } else {
      void submitMove(live.selected, square);
    }
  }
}

async function submitSense(square: string): Promise<void> {
  if (!live) return;
  try {
    await api.sense(live.gameId, live.token, square);
    live.hover = null;
    await refresh();
  } catch (error) {
    showError(error);
  }
}

function needsPromotion(view: ClientGameView, from: string, to: string): boolean {
  const piece = view.ownPieces.get(from);
  if (!piece || piece.toUpperCase() !== 'P') return false;
  const rank = parseSquare(to).rank;
  return view.color === 'white' ? rank === 7 : rank === 0;
}

async function submitMove(from: string, to: string): Promise<void> {
  if (!live) return;
  let move = from + to;
  if (needsPromotion(live.view, from, to)) {
    move += await pickPromotion();
  }
  live.selected = null;
  try {
    await api.move(live.gameId, live.token, move);
    await refresh();
  } catch (error) {
    showError(error);
    renderLive();  // selection cleared; piece visually snaps back
  }
}

function pickPromotion(): Promise<string> {
  const picker = $('promotion');
  picker.classList.remove('hidden');
  return new Promise((resolve) => {
    for (const button of picker.querySelectorAll('button')) {
      (button as HTMLButtonElement).onclick = () => {
        picker.classList.add('hidden');
        resolve((button as HTMLButtonElement).dataset.piece!);
      };
    }
  });
}

async function submitPass(): Promise<void> {
  if (!live) return;
  try {
    await api.move(live.gameId, live.token, 'pass');
    await refresh();
  } catch (error) {
    showError(error);
  }
}

// -- game loop ------------------------------------------------------------------

async function refresh(): Promise<void> {
  if (!live) return;
  const payload = await api.state(live.gameId, live.token);
  applyState(live.view, payload);
  renderLive();
}

async function pollLoop(): Promise<void> {
  if (!live || live.polling) return;
  live.polling = true;
  while (live && live.view.phase !== 'finished') {
    try {
      const payload: StatePayload = await api.state(live.gameId, live.token, {
        wait: true, version: live.view.eventsSeen,
      });
      applyState(live.view, payload);
      renderLive();
    } catch (error) {
      showError(error);
      await new Promise((r) => setTimeout(r, 2000));
    }
  }
}

function showError(error: unknown): void {
  const box = $('error');
  box.textContent = error instanceof ApiError
    ? `${error.code}: ${error.message}` : String(error);
  box.classList.remove('hidden');
  setTimeout(() => box.classList.add('hidden'), 4000);
}

// -- lobby ------------------------------------------------------------------------

function opponentSpec(): SeatSpec {
  const kind = ($('opponent') as HTMLSelectElement).value;
  if (kind === 'net') {
    return {
      kind: 'net',
      checkpoint: ($('checkpoint') as HTMLInputElement).value,
      mode: 'argmax',
    };
  }
  return { kind: kind as 'random' | 'greedy' };
}

async function startGame(): Promise<void> {
  const color = ($('color') as HTMLSelectElement).value as Color;
  const me: SeatSpec = { kind: 'human' };
  const opponent = opponentSpec();
  try {
    const { gameId, payload } = await api.createGame(
      color === 'white' ? me : opponent,
      color === 'black' ? me : opponent,
    );
    const token = payload.seats[color].token!;
    live = {
      gameId, token, view: emptyView(color),
      selected: null, hover: null, polling: false,
    };
    $('lobby').classList.add('hidden');
    $('game').classList.remove('hidden');
    $('game-id').textContent = gameId;
    await refresh();
    void pollLoop();
  } catch (error) {
    showError(error);
  }
}

// -- replay browser ----------------------------------------------------------------

async function openReplayList(): Promise<void> {
  $('lobby').classList.add('hidden');
  $('game').classList.add('hidden');
  $('replays').classList.remove('hidden');
  const list = $('replay-list');
  list.innerHTML = 'loading...';
  try {
    const { stored } = await api.listGames();
    list.innerHTML = stored.length ? '' : 'no stored games yet';
    for (const id of stored) {
      const button = document.createElement('button');
      button.className = 'replay-item';
      button.textContent = id;
      button.onclick = () => void openReplay(id);
      list.appendChild(button);
    }
  } catch (error) {
    list.textContent = 'failed to list games';
    showError(error);
  }
}

async function openReplay(gameId: string): Promise<void> {
  try {
    const record = await api.replay(gameId);
    replay = new ReplayController(record);
    $('replays').classList.add('hidden');
    $('replay-view').classList.remove('hidden');
    $('replay-id').textContent = gameId;
    const slider = $('ply') as HTMLInputElement;
    slider.max = String(replay.totalPlies());
    slider.value = String(replay.ply);
    const truthToggle = $('truth') as HTMLInputElement;
    truthToggle.disabled = !replay.truthAvailable();
    truthToggle.checked = false;
    replay.showTruth = false;
    renderReplay();
  } catch (error) {
    showError(error);
  }
}

export function replayBoardModel(controller: ReplayController): BoardModel {
  const view = controller.viewAt();
  const model = emptyBoardModel(controller.perspective);
  for (const [sq, piece] of view.ownPieces) {
    model.cells.set(sq, { piece, kind: 'own' });
  }
  for (const [sq, entry] of view.remembered) {
    if (!view.ownPieces.has(sq)) {
      model.cells.set(sq, { piece: entry.piece, kind: 'remembered',
                            age: rememberedAge(view, sq) ?? undefined });
    }
  }
  model.lastWindow = view.lastSenseWindow;
  if (controller.showTruth && controller.truthAvailable()) {
    for (const [sq, piece] of controller.truthAt()) {
      model.cells.set(sq, { piece, kind: 'truth' });
    }
  }
  return model;
}

function renderReplay(): void {
  if (!replay) return;
  renderBoard($('replay-board'), replayBoardModel(replay));
  $('ply-label').textContent =
    `${replay.ply}/${replay.totalPlies()} ` + describePly(replay.record, replay.ply);
  const banner = $('replay-banner');
  if (replay.ply >= replay.totalPlies() && replay.record.result) {
    const result = replay.record.result;
    banner.textContent = result.winner === null
      ? `draw (${result.reason})` : `${result.winner} wins (${result.reason})`;
    banner.classList.remove('hidden');
  } else {
    banner.classList.add('hidden');
  }
}

// -- boot ---------------------------------------------------------------------------

export function wireUp(): void {
  $('start').onclick = () => void startGame();
  $('pass-btn').onclick = () => void submitPass();
  $('browse').onclick = () => void openReplayList();
  $('replay-current').onclick = () => {
    if (live) void openReplay(live.gameId);
  };
  ($('opponent') as HTMLSelectElement).onchange = () => {
    $('checkpoint-row').classList.toggle(
      'hidden', ($('opponent') as HTMLSelectElement).value !== 'net');
  };
  $('ply').oninput = () => {
    if (!replay) return;
    replay.ply = Number(($('ply') as HTMLInputElement).value);
    renderReplay();
  };
  $('perspective').onclick = () => {
    if (!replay) return;
    replay.perspective = replay.perspective === 'white' ? 'black' : 'white';
    $('perspective').textContent = `perspective: ${replay.perspective}`;
    renderReplay();
  };
  ($('truth') as HTMLInputElement).onchange = () => {
    if (!replay) return;
    replay.showTruth = ($('truth') as HTMLInputElement).checked;
    renderReplay();
  };
  for (const id of ['back-from-replays', 'back-from-view']) {
    $(id).onclick = () => {
      $('replays').classList.add('hidden');
      $('replay-view').classList.add('hidden');
      (live ? $('game') : $('lobby')).classList.remove('hidden');
    };
  }
}

if (typeof document !== 'undefined' && document.getElementById('lobby')) {
  wireUp();
}
