// DOM rendering audit: the fog never leaks opponent pieces, hover previews
// clip at edges, stale sightings fade.

import { beforeEach, describe, expect, it } from 'vitest';
import { emptyBoardModel, renderBoard, staleOpacity } from '../src/board.js';
import { applyEvent, emptyView, rememberedAge } from '../src/state.js';
import type { SeatEvent } from '../src/types.js';
import { senseWindow } from '../src/types.js';

function root(): HTMLElement {
  document.body.innerHTML = '<div id="board"></div>';
  return document.getElementById('board')!;
}

function modelFromView(view: ReturnType<typeof emptyView>) {
  const model = emptyBoardModel(view.color);
  for (const [sq, piece] of view.ownPieces) model.cells.set(sq, { piece, kind: 'own' });
  for (const [sq, entry] of view.remembered) {
    if (!view.ownPieces.has(sq)) {
      model.cells.set(sq, { piece: entry.piece, kind: 'remembered',
                            age: rememberedAge(view, sq) ?? undefined });
    }
  }
  model.lastWindow = view.lastSenseWindow;
  return model;
}

function opponentPieceSquares(el: HTMLElement, whiteIsOpponent: boolean): string[] {
  const out: string[] = [];
  for (const span of el.querySelectorAll('.piece')) {
    const piece = (span as HTMLElement).dataset.piece!;
    if (piece === '?') { out.push((span.parentElement as HTMLElement).dataset.square!); continue; }
    const isWhite = piece === piece.toUpperCase();
    if (isWhite === whiteIsOpponent) {
      out.push((span.parentElement as HTMLElement).dataset.square!);
    }
  }
  return out;
}

describe('board rendering', () => {
  beforeEach(() => { document.body.innerHTML = ''; });

  it('renders 64 squares with coordinates', () => {
    const el = root();
    renderBoard(el, emptyBoardModel('white'));
    expect(el.querySelectorAll('.square').length).toBe(64);
    expect(el.querySelector('.coords')).not.toBeNull();
  });

  it('hover preview highlights the clipped window (h8 -> 4 squares)', () => {
    const el = root();
    const model = emptyBoardModel('white');
    model.senseHover = senseWindow('h8');
    renderBoard(el, model);
    expect(el.querySelectorAll('.sense-hover').length).toBe(4);
    model.senseHover = senseWindow('e4');
    renderBoard(el, model);
    expect(el.querySelectorAll('.sense-hover').length).toBe(9);
  });

  it('unknown squares are fogged; sensed window squares are not', () => {
    const el = root();
    const model = emptyBoardModel('white');
    model.lastWindow = senseWindow('d5');
    renderBoard(el, model);
    const foggy = el.querySelectorAll('.square.fog').length;
    expect(foggy).toBe(64 - 9);
    for (const sq of senseWindow('d5')) {
      const cell = el.querySelector(`[data-square="${sq}"]`)!;
      expect(cell.classList.contains('fog')).toBe(false);
    }
  });

  it('stale sightings fade with age', () => {
    expect(staleOpacity(0)).toBe(1);
    expect(staleOpacity(3)).toBeLessThan(1);
    expect(staleOpacity(50)).toBeGreaterThanOrEqual(0.35);
    const el = root();
    const model = emptyBoardModel('white');
    model.cells.set('f6', { piece: 'r', kind: 'remembered', age: 4 });
    renderBoard(el, model);
    const span = el.querySelector('.piece.remembered') as HTMLElement;
    expect(Number(span.style.opacity)).toBeCloseTo(staleOpacity(4));
    expect(span.title).toContain('4 turns ago');
  });

  it('hidden-information audit over a scripted game', () => {
    // A white player's scripted stream: the DOM must never show a black
    // piece on a square that was not revealed by a sense result or flagged
    // by a capture notice.
    const view = emptyView('white');
    view.ownPieces.set('e1', 'K');
    view.ownPieces.set('d1', 'Q');
    const el = root();
    const allowed = new Set<string>();

    const script: Array<{ event: SeatEvent; reveals?: string[] }> = [
      { event: { type: 'turn_start', turn: 1, opp_capture: null } },
      { event: { type: 'sense_result', turn: 1, center: 'd5',
                 squares: senseWindow('d5').map((sq) =>
                   [sq, sq === 'd5' ? 'n' : sq === 'e6' ? 'q' : null]) as never },
        reveals: ['d5', 'e6'] },
      { event: { type: 'move_result', turn: 1, requested: 'd1d5', taken: 'd1d5',
                 capture_square: 'd5', was_illegal: false } },
      { event: { type: 'turn_start', turn: 2, opp_capture: 'd5' },
        reveals: ['d5'] },
      { event: { type: 'sense_result', turn: 2, center: 'g7',
                 squares: senseWindow('g7').map((sq) =>
                   [sq, sq === 'g8' ? 'k' : null]) as never },
        reveals: ['g8'] },
    ];

    for (const step of script) {
      applyEvent(view, step.event);
      for (const sq of step.reveals ?? []) allowed.add(sq);
      if (step.event.type === 'move_result' && step.event.capture_square) {
        // we captured there: whatever was remembered is gone
        allowed.delete(step.event.capture_square);
      }
      if (step.event.type === 'sense_result') {
        for (const [sq, piece] of step.event.squares) {
          if (piece === null) allowed.delete(sq);
        }
      }
      renderBoard(el, modelFromView(view));
      for (const sq of opponentPieceSquares(el, false)) {
        expect(allowed.has(sq), `opponent piece leaked at ${sq}`).toBe(true);
      }
    }
    // End state: the unknown attacker, the old queen sighting, and the king.
    expect(opponentPieceSquares(el, false).sort()).toEqual(['d5', 'e6', 'g8']);
  });
});
