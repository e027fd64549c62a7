/**
 * Pure state for the four-corner calibration draft.  No DOM, no network,
 * and no geometry beyond hit-testing a click against existing markers —
 * every measurement the user sees comes back from the server.
 */

export interface Point {
  x: number;
  y: number;
}

/** What a successful compute gave us back, kept verbatim. */
export interface ComputedFit {
  homography: number[][];
  lengthsCm: number[];
  errorsPct: number[];
}

/** Corner labels by click order; the server expects this correspondence. */
export const CORNER_LABELS = ["TL", "TR", "BR", "BL"] as const;

/** Clicks this close to an existing corner adjust it instead of being ignored. */
export const SNAP_RADIUS_PX = 15;

export interface Draft {
  cameraId: string;
  /** Up to four corners, in click order. */
  points: Point[];
  worldWidthCm: number;
  worldHeightCm: number;
  /** Present only while the server's answer matches the current points. */
  result: ComputedFit | null;
  hint: string | null;
}

export function emptyDraft(cameraId: string): Draft {
  return {
    cameraId,
    points: [],
    worldWidthCm: 0,
    worldHeightCm: 0,
    result: null,
    hint: null,
  };
}

function gap(a: Point, b: Point): number {
  return Math.hypot(a.x - b.x, a.y - b.y);
}

/**
 * Place or adjust a corner.  The first four clicks append in order; once
 * all four are placed, a click within SNAP_RADIUS_PX of a corner moves
 * that corner, and anything farther is ignored with a hint.  Any change
 * to the points invalidates a previously computed result.
 */
export function pickPoint(draft: Draft, click: Point): Draft {
  if (draft.points.length < 4) {
    return { ...draft, points: [...draft.points, click], result: null, hint: null };
  }
  let nearest = 0;
  for (let i = 1; i < draft.points.length; i++) {
    if (gap(draft.points[i]!, click) < gap(draft.points[nearest]!, click)) {
      nearest = i;
    }
  }
  if (gap(draft.points[nearest]!, click) > SNAP_RADIUS_PX) {
    return {
      ...draft,
      hint: `all four corners are placed — click within ${SNAP_RADIUS_PX} px of one to adjust it`,
    };
  }
  const points = draft.points.slice();
  points[nearest] = click;
  return { ...draft, points, result: null, hint: null };
}

export function setWorldRect(draft: Draft, widthCm: number, heightCm: number): Draft {
  return { ...draft, worldWidthCm: widthCm, worldHeightCm: heightCm, result: null };
}

export function withResult(draft: Draft, result: ComputedFit): Draft {
  return { ...draft, result, hint: null };
}

export function canCompute(draft: Draft): boolean {
  return draft.points.length === 4 && draft.worldWidthCm > 0 && draft.worldHeightCm > 0;
}

export function canSave(draft: Draft): boolean {
  return draft.result !== null && draft.cameraId !== "";
}
