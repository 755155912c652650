// DOM board rendering. The board is a plain 8x8 grid of divs; everything it
// shows comes from a BoardModel that the caller assembles from its view of
// the game, so rendering stays auditable: if a piece is not in the model,
// it cannot appear in the DOM.

import type { Color, PieceChar } from './types.js';
import { FILES, PIECE_GLYPHS, squareName } from './types.js';
import type { RememberedPiece } from './state.js';

export type CellKind = 'own' | 'remembered' | 'truth';

export interface CellModel {
  piece: RememberedPiece;
  kind: CellKind;
  /** Turns since last confirmed; drives the stale-belief fade. */
  age?: number;
}

export interface BoardModel {
  orientation: Color;
  cells: Map<string, CellModel>;
  senseHover: string[];
  lastWindow: string[];
  selected: string | null;
  oppCapture: string | null;
  myCapture: string | null;
  truncatedTo: string | null;
  /** Squares the player may interact with are left enabled. */
  interactive: boolean;
}

export interface BoardHandlers {
  onSquareClick?: (square: string) => void;
  onSquareHover?: (square: string | null) => void;
}

export function emptyBoardModel(orientation: Color): BoardModel {
  return {
    orientation,
    cells: new Map(),
    senseHover: [],
    lastWindow: [],
    selected: null,
    oppCapture: null,
    myCapture: null,
    truncatedTo: null,
    interactive: false,
  };
}

function glyphFor(piece: RememberedPiece): string {
  return piece === '?' ? '?' : PIECE_GLYPHS[piece as PieceChar];
}

/** Opacity for a remembered piece: fresh = solid, stale fades toward fog. */
export function staleOpacity(age: number | undefined): number {
  if (age === undefined) return 1;
  return Math.max(0.35, 1 - 0.12 * age);
}

export function renderBoard(root: HTMLElement, model: BoardModel,
                            handlers: BoardHandlers = {}): void {
  root.innerHTML = '';
  root.classList.add('board');
  const ranks = model.orientation === 'white'
    ? [7, 6, 5, 4, 3, 2, 1, 0] : [0, 1, 2, 3, 4, 5, 6, 7];
  const files = model.orientation === 'white'
    ? [0, 1, 2, 3, 4, 5, 6, 7] : [7, 6, 5, 4, 3, 2, 1, 0];
  const hover = new Set(model.senseHover);
  const window_ = new Set(model.lastWindow);
  for (const rank of ranks) {
    for (const file of files) {
      const sq = squareName(file, rank);
      const cell = document.createElement('div');
      cell.className = 'square ' + (((file + rank) % 2 === 0) ? 'dark' : 'light');
      cell.dataset.square = sq;
      const known = model.cells.get(sq);
      if (!known && !window_.has(sq)) cell.classList.add('fog');
      if (window_.has(sq)) cell.classList.add('window');
      if (hover.has(sq)) cell.classList.add('sense-hover');
      if (model.selected === sq) cell.classList.add('selected');
      if (model.oppCapture === sq) cell.classList.add('opp-capture');
      if (model.myCapture === sq) cell.classList.add('my-capture');
      if (known) {
        const span = document.createElement('span');
        span.className = `piece ${known.kind}`;
        span.dataset.piece = known.piece;
        span.textContent = glyphFor(known.piece);
        if (known.kind === 'remembered') {
          span.style.opacity = String(staleOpacity(known.age));
          if (known.age !== undefined && known.age > 0) {
            span.title = `last seen ${known.age} turn${known.age === 1 ? '' : 's'} ago`;
            cell.classList.add('stale');
          }
        }
        cell.appendChild(span);
      }
      if (model.truncatedTo === sq) {
        const badge = document.createElement('span');
        badge.className = 'badge truncated';
        badge.textContent = 'T';
        badge.title = 'move was truncated here';
        cell.appendChild(badge);
      }
      if (model.interactive && handlers.onSquareClick) {
        cell.addEventListener('click', () => handlers.onSquareClick!(sq));
      }
      if (model.interactive && handlers.onSquareHover) {
        cell.addEventListener('mouseenter', () => handlers.onSquareHover!(sq));
        cell.addEventListener('mouseleave', () => handlers.onSquareHover!(null));
      }
      root.appendChild(cell);
    }
  }
  const coords = document.createElement('div');
  coords.className = 'coords';
  coords.textContent = model.orientation === 'white'
    ? `${FILES} / 1-8` : `${[...FILES].reverse().join('')} / 8-1`;
  root.appendChild(coords);
}
