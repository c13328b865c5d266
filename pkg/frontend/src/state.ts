/** Session state and its pure transitions.
 *
 * The rendered page is always `deriveView` applied to the last server
 * responses held here. Reducers never mutate their input and never talk
 * to the network; `main.ts` owns the polling loop and feeds results in.
 */

import type {
  QueriesPayload,
  ScatterRow,
  StatusPayload,
  SubmitBody,
  SubmitOutcome,
} from "./api.js";
import { confidenceHeat, heatIntensity, stateColor } from "./colors.js";

export interface SessionState {
  status: StatusPayload | null;
  queries: QueriesPayload;
  scatter: ScatterRow[];
  network: 1 | 2;
  /** pending query id -> class the operator picked */
  selections: Record<number, number>;
  /** pending query id -> inline error from the last rejected submission */
  cardErrors: Record<number, string>;
  /** ids acknowledged by the service in the current query round */
  submittedIds: number[];
  inFlight: boolean;
  duplicateNotice: boolean;
  /** connectivity or run-level problem shown across the top; never wipes data */
  banner: string | null;
}

export function initialState(): SessionState {
  return {
    status: null,
    queries: { query_epoch: null, items: [] },
    scatter: [],
    network: 1,
    selections: {},
    cardErrors: {},
    submittedIds: [],
    inFlight: false,
    duplicateNotice: false,
    banner: null,
  };
}

export function withStatus(s: SessionState, status: StatusPayload): SessionState {
  // a successful poll clears any stale unreachable banner
  return { ...s, status, banner: null };
}

export function withScatter(s: SessionState, rows: ScatterRow[]): SessionState {
  return { ...s, scatter: rows };
}

export function withNetwork(s: SessionState, network: 1 | 2): SessionState {
  return { ...s, network };
}

/** A failed poll keeps everything already on screen and raises the banner. */
export function withFetchError(s: SessionState, message: string): SessionState {
  return { ...s, banner: message };
}

export function withQueries(s: SessionState, queries: QueriesPayload): SessionState {
  if (queries.query_epoch !== s.queries.query_epoch) {
    // a new query round invalidates every per-card leftover
    return {
      ...s,
      queries,
      selections: {},
      cardErrors: {},
      submittedIds: [],
      duplicateNotice: false,
    };
  }
  const live = new Set(queries.items.map((item) => item.id));
  const selections: Record<number, number> = {};
  for (const [key, cls] of Object.entries(s.selections)) {
    if (live.has(Number(key))) selections[Number(key)] = cls;
  }
  const cardErrors: Record<number, string> = {};
  for (const [key, msg] of Object.entries(s.cardErrors)) {
    if (live.has(Number(key))) cardErrors[Number(key)] = msg;
  }
  return {
    ...s,
    queries,
    selections,
    cardErrors,
    submittedIds: s.submittedIds.filter((id) => live.has(id)),
  };
}

/** Record the operator picking a class for one pending query. */
export function choose(s: SessionState, id: number, cls: number): SessionState {
  if (s.inFlight) return s;
  if (!s.queries.items.some((item) => item.id === id)) return s;
  const numClasses = s.status?.num_classes ?? 0;
  if (!Number.isInteger(cls) || cls < 0 || cls >= numClasses) return s;
  const cardErrors = { ...s.cardErrors };
  delete cardErrors[id];
  return { ...s, selections: { ...s.selections, [id]: cls }, cardErrors };
}

export type SubmitStart =
  | { ok: true; state: SessionState; body: SubmitBody }
  | { ok: false; reason: string };

/**
 * Freeze the current selections into a POST body and mark the session
 * in flight. Every id in the body comes from the last /queries response;
 * nothing else can enter it.
 */
export function beginSubmit(s: SessionState): SubmitStart {
  if (s.inFlight) return { ok: false, reason: "a submission is already in flight" };
  if (!s.status) return { ok: false, reason: "not connected yet" };
  const items = s.queries.items;
  if (items.length === 0) return { ok: false, reason: "no pending queries" };
  const labels: Record<string, number> = {};
  for (const item of items) {
    const cls = s.selections[item.id];
    if (cls === undefined) {
      return { ok: false, reason: `query ${item.id} has no class chosen` };
    }
    labels[String(item.id)] = cls;
  }
  const body: SubmitBody = {
    run_id: s.status.run_id,
    query_epoch: s.queries.query_epoch,
    labels,
  };
  return { ok: true, state: { ...s, inFlight: true }, body };
}

/**
 * Fold the service's answer back in.
 *
 * 200 clears the acknowledged selections; an all-noop ack is the
 * duplicate-submission case and raises a visible notice instead of
 * changing any counts. Any other status rolls the optimistic marks back:
 * selections stay as picked and the error lands on the cards that were
 * neither accepted nor already answered.
 */
export function applyAck(s: SessionState, outcome: SubmitOutcome): SessionState {
  const base = { ...s, inFlight: false };
  if (outcome.status === 200) {
    const acked = new Set([...outcome.accepted, ...outcome.noop]);
    const selections: Record<number, number> = {};
    for (const [key, cls] of Object.entries(s.selections)) {
      if (!acked.has(Number(key))) selections[Number(key)] = cls;
    }
    const cardErrors: Record<number, string> = {};
    for (const [key, msg] of Object.entries(s.cardErrors)) {
      if (!acked.has(Number(key))) cardErrors[Number(key)] = msg;
    }
    const submittedIds = [...s.submittedIds];
    for (const id of acked) {
      if (!submittedIds.includes(id)) submittedIds.push(id);
    }
    return {
      ...base,
      selections,
      cardErrors,
      submittedIds,
      duplicateNotice: outcome.accepted.length === 0 && outcome.noop.length > 0,
    };
  }
  if (outcome.status === 0) {
    // transport failure: nothing reached a decision we can trust
    return { ...base, banner: outcome.error ?? "label submission failed" };
  }
  const settled = new Set([...outcome.accepted, ...outcome.noop]);
  const message = outcome.error ?? `submission rejected with ${outcome.status}`;
  const cardErrors = { ...s.cardErrors };
  for (const item of s.queries.items) {
    if (!settled.has(item.id) && s.selections[item.id] !== undefined) {
      cardErrors[item.id] = message;
    }
  }
  return { ...base, cardErrors, duplicateNotice: false };
}

export interface ScatterPointView {
  id: number;
  x: number;
  y: number;
  outline: string;
  fill: string;
  heat: number;
  state: string;
  label: number;
  confidence: number;
  highlighted: boolean;
}

export interface QueryCardView {
  id: number;
  payloadRef: string | null;
  confidence: number;
  suggested: number | null;
  chosen: number | null;
  submitted: boolean;
  error: string | null;
}

export interface SparkPoint {
  epoch: number;
  kappa: number;
  accuracy: number;
  labeledFrac: number | null;
}

export interface UiSessionView {
  phase: string;
  runId: string | null;
  fold: number | null;
  epoch: number;
  cActive: number;
  nActive: number;
  labeledCount: number;
  numClasses: number;
  interactive: boolean;
  network: 1 | 2;
  banner: string | null;
  duplicateNotice: boolean;
  inFlight: boolean;
  canSubmit: boolean;
  submitHint: string | null;
  classes: number[];
  scatter: ScatterPointView[];
  cards: QueryCardView[];
  spark: SparkPoint[];
  error: string | null;
  results: Record<string, unknown> | null;
}

/** Pure projection of SessionState onto everything the renderer draws. */
export function deriveView(s: SessionState): UiSessionView {
  const status = s.status;
  const pending = new Set(s.queries.items.map((item) => item.id));
  const submitted = new Set(s.submittedIds);

  const scatter: ScatterPointView[] = s.scatter.map((row) => ({
    id: row.id,
    x: row.x,
    y: row.y,
    outline: stateColor(row.state),
    fill: confidenceHeat(row.confidence),
    heat: heatIntensity(row.confidence),
    state: row.state,
    label: row.label,
    confidence: row.confidence,
    highlighted: pending.has(row.id),
  }));

  const cards: QueryCardView[] = s.queries.items.map((item) => ({
    id: item.id,
    payloadRef: item.payload_ref,
    confidence: item.confidence,
    suggested: item.suggested,
    chosen: s.selections[item.id] ?? null,
    submitted: submitted.has(item.id),
    error: s.cardErrors[item.id] ?? null,
  }));

  let submitHint: string | null = null;
  if (s.inFlight) submitHint = "submitting";
  else if (cards.length === 0) submitHint = "no pending queries";
  else if (cards.some((card) => card.chosen === null)) {
    submitHint = "choose a class for every query";
  }

  const numClasses = status?.num_classes ?? 0;
  return {
    phase: status?.phase ?? "CONNECTING",
    runId: status?.run_id ?? null,
    fold: status?.fold ?? null,
    epoch: status?.epoch ?? 0,
    cActive: status?.c_active ?? 0,
    nActive: status?.n_active ?? 0,
    labeledCount: status?.labeled_count ?? 0,
    numClasses,
    interactive: status?.interactive ?? false,
    network: s.network,
    banner: s.banner,
    duplicateNotice: s.duplicateNotice,
    inFlight: s.inFlight,
    canSubmit: submitHint === null,
    submitHint,
    classes: Array.from({ length: numClasses }, (_, i) => i),
    scatter,
    cards,
    spark: (status?.metrics_tail ?? []).map((row) => ({
      epoch: row.epoch,
      kappa: row.kappa,
      accuracy: row.accuracy,
      labeledFrac: row.labeled_frac,
    })),
    error: status?.error ?? null,
    results: status?.results ?? null,
  };
}
