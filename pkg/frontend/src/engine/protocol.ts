/**
 * Member-side protocol state machine (semihonest groups).
 *
 * Each member submits one masked vector per round and checks the three
 * aggregates coming back: the integrity poll v' (sum of all scaled entries),
 * the trace aggregate c (weighted by 2^index so a single charger's identity
 * pops out) and its own balance entry b. All expectations are recomputable
 * from the group key, so catch-up after offline gaps needs no extra state.
 *
 * Collisions (two chargers in one round) break the single-charger pattern of
 * c and are repaired in-band: the group rolls the round back in one extra
 * round, then the colliding chargers re-send one per round in index order.
 * The rollback entry each member contributes is 1 + (-w0*x)/w1 where x is its
 * own net delta in the collided round.
 *
 * Malicious-mode groups (tagged units, resend rounds, settle claims) are out
 * of scope here and rejected at session setup; the command-line client covers
 * them.
 */

import * as packing from "./packing.js";
import { GroupSecret, MaskDomain, RoundMaskSheet, sheetDiag } from "./masks.js";
import * as ring from "./ring.js";
import { Schedule } from "./schedule.js";

export const DIGEST_RETENTION = 64;

export type Mode = "semihonest" | "malicious";

export enum Status {
  OK = 0,
  INTEGRITY_ROLLBACK = 1,
  OFFLINE_ROSTER_ATTACHED = 2,
  SETTLE_IN_PROGRESS = 3,
  MEMBERSHIP_CHANGED = 4,
}

export class ProtocolError extends Error {}

/** A resolution round value cannot divide the required correction. */
export class DivisibilityError extends ProtocolError {}

export type OutcomeKind =
  | "idle"
  | "charged"
  | "collision"
  | "resolution"
  | "framed"
  | "integrity-failure";

export type Phase = "normal" | "rollback" | "recharge";

export type RoundKind = "normal" | "rollback" | "burned";

export interface ChargeEvent {
  charger: number;
  cents: number;
  toSelf: boolean;
  lane: number | null;
}

export interface RoundOutcome {
  kind: OutcomeKind;
  roundNo: number;
  value: number;
  charges: ChargeEvent[];
  selfDeltaCents: number;
  announcedTotal: number | null;
  note: string;
}

/**
 * What a member wants to do in one round. Unpacked rounds take at most one
 * target; packed rounds take a lane -> target map (up to six parallel bits).
 */
export interface RoundIntent {
  target: number | null;
  laneTargets: Map<number, number>;
  announceTotal: number | null;
}

export function idleIntent(): RoundIntent {
  return { target: null, laneTargets: new Map(), announceTotal: null };
}

export function chargeIntent(target: number, announceTotal: number | null = null): RoundIntent {
  return { target, laneTargets: new Map(), announceTotal };
}

export function chargeLanesIntent(
  laneTargets: Map<number, number>,
  announceTotal: number | null = null,
): RoundIntent {
  return { target: null, laneTargets: new Map(laneTargets), announceTotal };
}

export function isCharge(intent: RoundIntent): boolean {
  return intent.target !== null || intent.laneTargets.size > 0;
}

/** Client view of one round's broadcast: the 52-byte core plus extras. */
export interface RoundDigest {
  roundNo: number;
  vPrime: bigint;
  c: bigint;
  bEntry: bigint;
  status: Status;
  offline: number[];
  events: string[];
  announceSum: bigint | null;
  rolledBack: boolean;
}

export interface RoundMeta {
  value: number;
  roster: number[];
  offline: number[];
  kind: RoundKind;
  bBefore: bigint;
  selfDeltaCents: number;
}

export interface MemberView {
  index: number;
  joinRound: number;
  leaveRound: number | null;
}

export function memberActiveAt(v: MemberView, m: number): boolean {
  return v.joinRound <= m && (v.leaveRound === null || m < v.leaveRound);
}

export interface CollisionState {
  round0: number;
  value0: number;
  xSelf: number;
  xLanes: number[] | null;
  ownIntent: RoundIntent | null;
  chargers: number[];
  rechargeQueue: number[];
}

export interface ClientGroupState {
  secret: GroupSecret;
  index: number;
  mode: Mode;
  schedule: Schedule;
  members: Map<number, MemberView>;
  nextRound: number;
  bReported: bigint;
  balanceCents: number;
  drift: Map<number, bigint>;
  digests: RoundDigest[];
  roundMeta: Map<number, RoundMeta>;
  phase: Phase;
  collision: CollisionState | null;
  sentIntents: Map<number, RoundIntent>;
  settling: boolean;
  /**
   * Events of the most recently seen digest, kept so that a round this client
   * rejected can still apply its membership changes when burned.
   */
  lastSeenEvents: [number, string[]] | null;
}

export function roster(state: ClientGroupState, m?: number): number[] {
  const at = m ?? state.nextRound;
  const out: number[] = [];
  for (const [i, v] of state.members) if (memberActiveAt(v, at)) out.push(i);
  return out.sort((a, b) => a - b);
}

export function inResolution(state: ClientGroupState): boolean {
  return state.phase !== "normal";
}

/** The value the group registers with the server at setup (semihonest: 1). */
export function setupConstant(): bigint {
  return 1n;
}

export function verifySetupConstant(a: bigint): boolean {
  return a === setupConstant();
}

function emptyState(
  secret: GroupSecret,
  index: number,
  mode: Mode,
  sched: Schedule,
  members: Map<number, MemberView>,
  drift: Map<number, bigint>,
): ClientGroupState {
  if (mode !== "semihonest") {
    throw new ProtocolError("malicious-mode groups are not supported by this client");
  }
  return {
    secret,
    index,
    mode,
    schedule: sched,
    members,
    nextRound: 0,
    bReported: 0n,
    balanceCents: 0,
    drift,
    digests: [],
    roundMeta: new Map(),
    phase: "normal",
    collision: null,
    sentIntents: new Map(),
    settling: false,
    lastSeenEvents: null,
  };
}

export function setupClient(
  secret: GroupSecret,
  index: number,
  n: number,
  mode: Mode,
  sched: Schedule,
): ClientGroupState {
  const members = new Map<number, MemberView>();
  const drift = new Map<number, bigint>();
  for (let i = 1; i <= n; i++) {
    members.set(i, { index: i, joinRound: 0, leaveRound: null });
    drift.set(i, 0n);
  }
  if (!members.has(index)) throw new ProtocolError(`index ${index} outside initial roster 1..${n}`);
  return emptyState(secret, index, mode, sched, members, drift);
}

/**
 * State for a member admitted mid-life, bootstrapped from the inviter.
 *
 * The inviter already hands the newcomer the group key; the same bundle
 * carries its mask-drift snapshot and member table. Without the pre-join
 * drift history the newcomer could not strip mask noise from the balance
 * vector at settle time, and the server cannot serve that history because
 * it never learns which rounds were resolution rounds.
 */
export function joinClient(
  secret: GroupSecret,
  index: number,
  mode: Mode,
  sched: Schedule,
  sponsor: ClientGroupState,
): ClientGroupState {
  if (inResolution(sponsor) || sponsor.settling) {
    throw new ProtocolError("cannot bootstrap a newcomer during a resolution or settle");
  }
  if (!sponsor.members.has(index)) {
    throw new ProtocolError(`join of ${index} not announced to the sponsor yet`);
  }
  const members = new Map<number, MemberView>();
  for (const [i, v] of sponsor.members) members.set(i, { ...v });
  const state = emptyState(secret, index, mode, sched, members, new Map(sponsor.drift));
  state.nextRound = sponsor.nextRound;
  // The snapshot's newest round is the one round a late integrity report can
  // still roll back; its meta rides along so the inherited drift stays
  // revertible. The newcomer had no balance or deltas in it.
  const last = sponsor.roundMeta.get(sponsor.nextRound - 1);
  if (last && last.kind === "normal") {
    state.roundMeta.set(sponsor.nextRound - 1, {
      value: last.value,
      roster: last.roster,
      offline: last.offline,
      kind: "normal",
      bBefore: 0n,
      selfDeltaCents: 0,
    });
  }
  return state;
}

// ---------------------------------------------------------------------------
// building submissions

function checkPackedIntent(state: ClientGroupState, intent: RoundIntent): void {
  const active = roster(state);
  for (const [lane, target] of intent.laneTargets) {
    if (lane < 0 || lane >= packing.SLOTS) throw new ProtocolError(`lane ${lane} out of range`);
    if (target === state.index || !active.includes(target)) {
      throw new ProtocolError(`bad packed target ${target}`);
    }
  }
}

/**
 * The masked submission for the next round under a user intent. Refused while
 * a collision is being resolved; during the recharge window only the
 * scheduled recharger may move, everyone else covers idle.
 */
export function buildRoundVector(state: ClientGroupState, intent: RoundIntent): bigint[] {
  if (state.phase === "rollback") {
    throw new ProtocolError("collision resolution pending; use collisionResolutionNext");
  }
  if (state.phase === "recharge") {
    if (isCharge(intent)) {
      throw new ProtocolError("charges are queued until the recharge window drains");
    }
    intent = rechargeIntent(state) ?? intent;
  }
  const m = state.nextRound;
  let vec: bigint[];
  if (state.schedule.kind === "packed") {
    checkPackedIntent(state, intent);
    vec = packedVector(state, m, intent);
  } else {
    vec = unpackedVector(state, m, intent);
  }
  state.sentIntents.set(m, intent);
  pruneIntents(state);
  return vec;
}

function unpackedVector(state: ClientGroupState, m: number, intent: RoundIntent): bigint[] {
  const active = roster(state, m);
  if (intent.target !== null && (intent.target === state.index || !active.includes(intent.target))) {
    throw new ProtocolError(`bad charge target ${intent.target}`);
  }
  const row = state.secret.roundMaskRow(m, state.index, active);
  const vec: bigint[] = [];
  for (const j of active) {
    let x = row.get(j)!;
    if (intent.target === null && j === state.index) x = ring.add(x, 1n);
    else if (j === intent.target) x = ring.add(x, 1n);
    vec.push(x);
  }
  return vec;
}

function packedVector(state: ClientGroupState, m: number, intent: RoundIntent): bigint[] {
  const active = roster(state, m);
  const row = state.secret.roundMaskRow(m, state.index, active);
  const laneVals = state.schedule.laneValues(m);
  const addPerMember = new Map<number, bigint>();
  for (let lane = 0; lane < packing.SLOTS; lane++) {
    const target = intent.laneTargets.get(lane) ?? state.index;
    const word = BigInt(laneVals[lane]) << BigInt(packing.SLOT_BITS * lane);
    addPerMember.set(target, (addPerMember.get(target) ?? 0n) + word);
  }
  return active.map((j) => ring.add(row.get(j)!, addPerMember.get(j) ?? 0n));
}

function rechargeIntent(state: ClientGroupState): RoundIntent | null {
  const col = state.collision;
  if (!col || col.rechargeQueue.length === 0) return null;
  if (col.rechargeQueue[0] !== state.index) return null;
  if (state.schedule.kind === "packed") {
    if (state.schedule.window(state.nextRound) !== state.schedule.window(col.round0)) return null;
  }
  return col.ownIntent;
}

/** The prescribed submission for the current rollback round. */
export function collisionResolutionNext(state: ClientGroupState): bigint[] {
  if (state.phase !== "rollback") throw new ProtocolError("no resolution round pending");
  const m = state.nextRound;
  const active = roster(state, m);
  const row = state.secret.roundMaskRow(m, state.index, active);
  const tau = rollbackEntry(state, m);
  return active.map((j) => (j === state.index ? ring.add(row.get(j)!, tau) : row.get(j)!));
}

/** Canonical q with w*q = y in the ring; w must divide y's low bits. */
function exactRingDiv(y: bigint, w: number): bigint {
  const wb = BigInt(w);
  if (w === 1) return y & ring.MASK;
  if ((w & (w - 1)) !== 0) {
    const masked = y & ring.MASK;
    if (masked % wb !== 0n) throw new DivisibilityError(`value ${w} cannot divide correction`);
    return masked / wb;
  }
  if ((y & (wb - 1n)) !== 0n) throw new DivisibilityError(`value ${w} cannot divide correction`);
  return (y & ring.MASK) >> BigInt(w.toString(2).length - 1);
}

function rollbackEntry(state: ClientGroupState, m: number): bigint {
  const col = state.collision!;
  if (state.schedule.kind === "packed") {
    const v0 = state.schedule.laneValues(col.round0);
    let word = state.schedule.packedUnit(m);
    col.xLanes!.forEach((xk, k) => {
      word = ring.sub(word, BigInt(v0[k] * xk) << BigInt(packing.SLOT_BITS * k));
    });
    return word;
  }
  const wNow = state.schedule.roundValue(m);
  const corr = exactRingDiv(ring.neg(BigInt(col.value0 * col.xSelf) & ring.MASK), wNow);
  return ring.add(1n, corr);
}

function pruneIntents(state: ClientGroupState): void {
  const horizon = state.nextRound - 8;
  for (const k of [...state.sentIntents.keys()]) if (k < horizon) state.sentIntents.delete(k);
}

// ---------------------------------------------------------------------------
// digest verification

/** True own-cell content of an idle submitter, before masking. */
function coverBase(state: ClientGroupState, m: number): bigint {
  if (state.schedule.kind === "packed") return state.schedule.packedUnit(m);
  return 1n;
}

function sheetFor(
  state: ClientGroupState,
  m: number,
  active: number[],
  offline: number[],
): RoundMaskSheet {
  const online = active.filter((i) => !offline.includes(i));
  return state.secret.roundMaskSheet(m, online, active);
}

/** Exact v' an honest server must publish for round m. */
function pollExpected(
  state: ClientGroupState,
  m: number,
  w: number,
  sheet: RoundMaskSheet,
  nOnline: number,
  nOffline: number,
): bigint {
  const base = coverBase(state, m);
  const wb = BigInt(w);
  // offline members are substituted with the synthetic a = 1
  const acc = wb * BigInt(nOnline) * base + wb * BigInt(nOffline) + wb * sheet.total;
  return acc & ring.MASK;
}

/** Trace aggregate if every online member had covered idle. */
function cBase(state: ClientGroupState, m: number, w: number, sheet: RoundMaskSheet): bigint {
  const base = coverBase(state, m);
  const wb = BigInt(w);
  let acc = 0n;
  for (const i of sheet.submitters) {
    acc += (wb * ((sheetDiag(sheet, i) + base - 1n) & ring.MASK)) << BigInt(i);
  }
  return acc & ring.MASK;
}

/**
 * Per-online-member public drift a round adds to a balance entry: w*(cover-a).
 * Zero for plain rounds, the lane-cover offset for packed rounds, and the
 * derived correction constant in rollback rounds.
 */
function shift(state: ClientGroupState, m: number, w: number): bigint {
  const base = coverBase(state, m);
  return (BigInt(w) * (base - 1n)) & ring.MASK;
}

/** Advance drift accounting and the round counter after a verified round. */
function accrue(
  state: ClientGroupState,
  digest: RoundDigest,
  w: number,
  active: number[],
  offline: number[],
  sheet: RoundMaskSheet,
  kind: RoundKind,
  selfDeltaCents: number,
): void {
  const m = digest.roundNo;
  const sh = shift(state, m, w);
  const off = new Set(offline);
  const wb = BigInt(w);
  for (const k of active) {
    let d = ((state.drift.get(k) ?? 0n) + wb * sheet.colSums.get(k)!) & ring.MASK;
    if (!off.has(k)) d = ring.add(d, sh);
    state.drift.set(k, d);
  }
  state.roundMeta.set(m, {
    value: w,
    roster: active,
    offline,
    kind,
    bBefore: state.bReported,
    selfDeltaCents,
  });
  state.bReported = digest.bEntry;
  state.balanceCents += selfDeltaCents;
  state.digests.push(digest);
  if (state.digests.length > DIGEST_RETENTION) state.digests.shift();
  state.nextRound = m + 1;
  state.settling = digest.status === Status.SETTLE_IN_PROGRESS;
  applyEvents(state, digest.events, m);
}

/**
 * Undo the accounting of the last accepted round after a server rollback.
 * Needed when a peer reported tampering this member could not see and the
 * server removed a round this member had already accepted.
 */
export function revertRound(state: ClientGroupState, m: number): void {
  const meta = state.roundMeta.get(m);
  if (!meta || m !== state.nextRound - 1) {
    throw new ProtocolError(`round ${m} is not the last accepted round`);
  }
  if (meta.kind !== "normal" || state.phase !== "normal") {
    throw new ProtocolError("cannot revert a resolution round");
  }
  const sheet = sheetFor(state, m, meta.roster, meta.offline);
  const sh = shift(state, m, meta.value);
  const off = new Set(meta.offline);
  const wb = BigInt(meta.value);
  for (const k of meta.roster) {
    let d = ring.sub(state.drift.get(k) ?? 0n, (wb * sheet.colSums.get(k)!) & ring.MASK);
    if (!off.has(k)) d = ring.sub(d, sh);
    state.drift.set(k, d);
  }
  state.bReported = meta.bBefore;
  state.balanceCents -= meta.selfDeltaCents;
  state.roundMeta.set(m, {
    value: 0,
    roster: meta.roster,
    offline: [],
    kind: "burned",
    bBefore: 0n,
    selfDeltaCents: 0,
  });
}

function applyEvents(state: ClientGroupState, events: string[], m: number): void {
  for (const ev of events) {
    const sep = ev.indexOf(":");
    const kind = sep < 0 ? ev : ev.slice(0, sep);
    const arg = sep < 0 ? "" : ev.slice(sep + 1);
    if (kind === "join") {
      const idx = Number(arg);
      if (!state.members.has(idx)) {
        state.members.set(idx, { index: idx, joinRound: m + 1, leaveRound: null });
        state.drift.set(idx, 0n);
      }
    } else if (kind === "leave") {
      const idx = Number(arg);
      const member = state.members.get(idx);
      if (member && member.leaveRound === null) member.leaveRound = m + 1;
    }
  }
}

/**
 * A rolled-back round contributes nothing to balances, but membership events
 * it carried still happened on the server and must be mirrored.
 */
function burnRound(state: ClientGroupState, m: number, events: string[]): void {
  state.roundMeta.set(m, {
    value: 0,
    roster: roster(state, m),
    offline: [],
    kind: "burned",
    bBefore: 0n,
    selfDeltaCents: 0,
  });
  applyEvents(state, events, m);
  state.nextRound = m + 1;
}

function fail(digest: RoundDigest, w: number, note: string): RoundOutcome {
  return {
    kind: "integrity-failure",
    roundNo: digest.roundNo,
    value: w,
    charges: [],
    selfDeltaCents: 0,
    announcedTotal: null,
    note,
  };
}

function readAnnouncementFrom(
  state: ClientGroupState,
  m: number,
  digest: RoundDigest,
  online: number[],
): number | null {
  if (digest.announceSum === null) return null;
  let acc = digest.announceSum;
  for (const i of online) acc = ring.sub(acc, state.secret.announceMask(m, i));
  const total = ring.signed(acc);
  return total === 0n ? null : Number(total);
}

/**
 * Verify one round broadcast, advance local state, and say what happened.
 *
 * On any integrity mismatch the state does not advance and the caller is
 * expected to report the error; the server's rollback confirmation arrives as
 * a `rollback:m` event on the next round, at which point the burned round is
 * skipped.
 */
export function processRoundDigest(state: ClientGroupState, digest: RoundDigest): RoundOutcome {
  const m = digest.roundNo;
  if (m !== state.nextRound) {
    if (m === state.nextRound + 1 && digest.events.includes(`rollback:${state.nextRound}`)) {
      const seen = state.lastSeenEvents;
      const burnedEvents = seen && seen[0] === state.nextRound ? seen[1] : [];
      burnRound(state, state.nextRound, burnedEvents);
    } else {
      throw new ProtocolError(
        `digest for round ${m} but client is at ${state.nextRound}; catch up first`,
      );
    }
  } else if (digest.events.includes(`rollback:${m - 1}`)) {
    const prior = state.roundMeta.get(m - 1);
    if (prior && prior.kind !== "burned") {
      // a peer saw tampering we could not; drop the round we accepted
      revertRound(state, m - 1);
    }
  }
  state.lastSeenEvents = [m, [...digest.events]];
  const w = state.schedule.roundValue(m);
  if (digest.rolledBack) {
    burnRound(state, m, digest.events);
    return {
      kind: "integrity-failure",
      roundNo: m,
      value: w,
      charges: [],
      selfDeltaCents: 0,
      announcedTotal: null,
      note: "round was rolled back",
    };
  }
  const active = roster(state, m);
  const offline = digest.offline.filter((i) => active.includes(i));
  const sheet = sheetFor(state, m, active, offline);

  const expectedPoll = pollExpected(state, m, w, sheet, sheet.submitters.length, offline.length);
  if (digest.vPrime !== expectedPoll) return fail(digest, w, "integrity poll mismatch");

  if (state.phase === "rollback") return processRollback(state, digest, w, active, offline, sheet);
  return processNormal(state, digest, w, active, offline, sheet);
}

// -- normal rounds (and recharge rounds, which are normal rounds with a queue)

function processNormal(
  state: ClientGroupState,
  digest: RoundDigest,
  w: number,
  active: number[],
  offline: number[],
  sheet: RoundMaskSheet,
): RoundOutcome {
  const m = digest.roundNo;
  const selfOnline = sheet.submitters.includes(state.index);
  const intent = selfOnline ? (state.sentIntents.get(m) ?? idleIntent()) : idleIntent();

  if (state.schedule.kind === "packed") {
    return processNormalPacked(state, digest, w, active, offline, sheet, intent, selfOnline);
  }

  const base = cBase(state, m, w, sheet);
  const weight = BigInt(w);
  const z = ring.sub(base, digest.c);
  const candidates = new Map<bigint, number | null>([[0n, null]]);
  for (const i of sheet.submitters) candidates.set((weight << BigInt(i)) & ring.MASK, i);

  if (!candidates.has(z)) {
    return enterCollision(state, digest, w, active, offline, sheet, intent, z);
  }

  const charger = candidates.get(z)!;
  if (intent.target !== null && charger !== state.index) {
    return fail(digest, w, "own charge missing from trace aggregate");
  }

  let xCandidates: number[];
  if (charger === null) xCandidates = [0];
  else if (charger === state.index) xCandidates = intent.target === null ? [0, 1] : [-1];
  else xCandidates = [0, 1];

  const x = matchBalance(state, digest, w, sheet, selfOnline, xCandidates);
  if (x === null) return fail(digest, w, "balance entry matches no admissible delta");

  const framed = charger === state.index && intent.target === null;
  accrue(state, digest, w, active, offline, sheet, "normal", w * x);
  advanceRecharge(state, charger);
  const announced = readAnnouncementFrom(state, m, digest, sheet.submitters);

  if (framed) {
    return {
      kind: "framed",
      roundNo: m,
      value: w,
      charges: [{ charger: state.index, cents: w, toSelf: x !== 0, lane: null }],
      selfDeltaCents: w * x,
      announcedTotal: announced,
      note: "trace names this member but no charge was sent",
    };
  }
  if (charger === null) {
    return {
      kind: "idle",
      roundNo: m,
      value: w,
      charges: [],
      selfDeltaCents: 0,
      announcedTotal: announced,
      note: "",
    };
  }
  return {
    kind: "charged",
    roundNo: m,
    value: w,
    charges: [{ charger, cents: w, toSelf: x > 0, lane: null }],
    selfDeltaCents: w * x,
    announcedTotal: announced,
    note: "",
  };
}

/** Return the net delta x whose expected balance entry matches, if any. */
function matchBalance(
  state: ClientGroupState,
  digest: RoundDigest,
  w: number,
  sheet: RoundMaskSheet,
  selfOnline: boolean,
  xCandidates: number[],
): number | null {
  const colSum = sheet.colSums.get(state.index);
  if (colSum === undefined) return null;
  let baseline = (state.bReported + BigInt(w) * colSum) & ring.MASK;
  if (selfOnline) baseline = ring.add(baseline, shift(state, digest.roundNo, w));
  for (const x of xCandidates) {
    const expected = (baseline + BigInt(w * x)) & ring.MASK;
    if (digest.bEntry === expected) return x;
  }
  return null;
}

/** c matched no single-charger pattern: collision, or a tampered digest. */
function enterCollision(
  state: ClientGroupState,
  digest: RoundDigest,
  w: number,
  active: number[],
  offline: number[],
  sheet: RoundMaskSheet,
  intent: RoundIntent,
  z: bigint,
): RoundOutcome {
  const m = digest.roundNo;
  const selfOnline = sheet.submitters.includes(state.index);
  const prior = state.collision;
  const priorQueue = prior ? [...prior.rechargeQueue] : [];

  let bits: bigint;
  try {
    bits = exactRingDiv(z, w);
  } catch (err) {
    if (err instanceof DivisibilityError) {
      return fail(digest, w, "trace aggregate is not a charger-set pattern");
    }
    throw err;
  }
  const chargers = decodeBits(bits, sheet.submitters);
  if (chargers === null || chargers.length < 2) {
    return fail(digest, w, "trace aggregate is not a charger-set pattern");
  }
  if (intent.target !== null && !chargers.includes(state.index)) {
    return fail(digest, w, "own charge missing from collided trace aggregate");
  }

  const xCandidates = [];
  for (let x = -1; x <= chargers.length; x++) xCandidates.push(x);
  const x = matchBalance(state, digest, w, sheet, selfOnline, xCandidates);
  if (x === null) return fail(digest, w, "balance entry matches no admissible delta");

  let own: RoundIntent | null = selfOnline ? intent : null;
  // a recharge still queued from the previous collision must not evaporate
  if (prior && priorQueue.includes(state.index) && (own === null || !isCharge(own))) {
    own = prior.ownIntent;
  }
  const queue = [...chargers];
  for (const i of priorQueue) if (!queue.includes(i)) queue.push(i);
  state.collision = {
    round0: m,
    value0: w,
    xSelf: x,
    xLanes: null,
    ownIntent: own,
    chargers: [...chargers],
    rechargeQueue: queue,
  };
  state.phase = "rollback";
  accrue(state, digest, w, active, offline, sheet, "normal", w * x);
  return {
    kind: "collision",
    roundNo: m,
    value: w,
    charges: [],
    selfDeltaCents: w * x,
    announcedTotal: null,
    note: `collision; chargers ${JSON.stringify(chargers)}`,
  };
}

/** Interpret an integer as a subset of online indices, or refuse. */
function decodeBits(bits: bigint, online: number[]): number[] | null {
  if (bits <= 0n) return null;
  const out: number[] = [];
  const allowed = new Set(online);
  let i = 0;
  while (bits > 0n) {
    if (bits & 1n) {
      if (!allowed.has(i)) return null;
      out.push(i);
    }
    bits >>= 1n;
    i += 1;
  }
  return out;
}

function advanceRecharge(state: ClientGroupState, charger: number | null): void {
  if (state.phase !== "recharge") return;
  const col = state.collision;
  if (charger !== null && col && col.rechargeQueue.length && col.rechargeQueue[0] === charger) {
    col.rechargeQueue.shift();
  }
  if (col && col.rechargeQueue.length === 0) {
    state.phase = "normal";
    state.collision = null;
  }
}

// -- packed rounds

/**
 * Bits of z are single charges V_k * 2^(21k + i); return (lane, charger)
 * pairs. Junk aggregates fail the per-bit validity check.
 */
function decodePackedCharges(
  state: ClientGroupState,
  m: number,
  z: bigint,
  online: number[],
): Array<[number, number]> | null {
  if (z === 0n) return [];
  const t = state.schedule.window(m);
  const allowed = new Set(online);
  const out: Array<[number, number]> = [];
  let e = 0;
  while (z > 0n) {
    if (z & 1n) {
      let hit: [number, number] | null = null;
      for (let k = 0; k < packing.SLOTS; k++) {
        const i = e - packing.SLOTS * t - (packing.SLOT_BITS + 1) * k;
        if (allowed.has(i)) {
          hit = [k, i];
          break;
        }
      }
      if (hit === null) return null;
      out.push(hit);
    }
    z >>= 1n;
    e += 1;
  }
  return out;
}

/** Own balance delta split into signed lane multiples of the lane values. */
function packedDeltaLanes(
  state: ClientGroupState,
  digest: RoundDigest,
  sheet: RoundMaskSheet,
  selfOnline: boolean,
  kind: "normal" | "rollback",
): number[] | null {
  const m = digest.roundNo;
  const colSum = sheet.colSums.get(state.index);
  if (colSum === undefined) return null;
  let baseline = (state.bReported + colSum) & ring.MASK;
  if (selfOnline) baseline = ring.add(baseline, shift(state, m, 1));
  const clean = ring.sub(digest.bEntry, baseline);
  let lanes: number[];
  try {
    lanes = packing.unpackSigned(clean);
  } catch (err) {
    if (err instanceof packing.SlotOverflowError) return null;
    throw err;
  }
  const vals = state.schedule.laneValues(kind === "rollback" ? state.collision!.round0 : m);
  const out: number[] = [];
  for (let k = 0; k < lanes.length; k++) {
    const lane = lanes[k];
    const q = Math.trunc(Math.abs(lane) / vals[k]);
    if (Math.abs(lane) % vals[k] !== 0) return null;
    out.push(lane >= 0 ? q : -q);
  }
  return out;
}

function processNormalPacked(
  state: ClientGroupState,
  digest: RoundDigest,
  w: number,
  active: number[],
  offline: number[],
  sheet: RoundMaskSheet,
  intent: RoundIntent,
  selfOnline: boolean,
): RoundOutcome {
  const m = digest.roundNo;
  const base = cBase(state, m, w, sheet);
  const z = ring.sub(base, digest.c);
  const entries = decodePackedCharges(state, m, z, sheet.submitters);
  if (entries === null) return fail(digest, w, "trace aggregate is not a packed charge pattern");

  for (const k of intent.laneTargets.keys()) {
    if (!entries.some(([lane, i]) => lane === k && i === state.index)) {
      return fail(digest, w, "own packed charge missing from trace aggregate");
    }
  }

  const laneChargers = new Map<number, number[]>();
  for (const [k, i] of entries) {
    if (!laneChargers.has(k)) laneChargers.set(k, []);
    laneChargers.get(k)!.push(i);
  }
  const collided = [...laneChargers.values()].some((v) => v.length > 1);

  const lanes = packedDeltaLanes(state, digest, sheet, selfOnline, "normal");
  if (lanes === null) return fail(digest, w, "balance entry matches no packed delta");
  const vals = state.schedule.laneValues(m);
  for (let k = 0; k < lanes.length; k++) {
    const mine = intent.laneTargets.has(k) ? -1 : 0;
    const incoming = (laneChargers.get(k)?.length ?? 0) - (intent.laneTargets.has(k) ? 1 : 0);
    if (!(mine <= lanes[k] && lanes[k] <= mine + Math.max(incoming, 0))) {
      return fail(digest, w, "balance entry matches no packed delta");
    }
  }

  const deltaCents = lanes.reduce((acc, xk, k) => acc + vals[k] * xk, 0);

  if (collided) {
    const prior = state.collision;
    const priorQueue = prior ? [...prior.rechargeQueue] : [];
    const chargers = [...new Set(entries.map(([, i]) => i))].sort((a, b) => a - b);
    let own: RoundIntent | null = selfOnline ? intent : null;
    if (prior && priorQueue.includes(state.index) && (own === null || !isCharge(own))) {
      own = prior.ownIntent;
    }
    const queue = [...chargers];
    for (const i of priorQueue) if (!queue.includes(i)) queue.push(i);
    state.collision = {
      round0: m,
      value0: w,
      xSelf: 0,
      xLanes: lanes,
      ownIntent: own,
      chargers,
      rechargeQueue: queue,
    };
    state.phase = "rollback";
    accrue(state, digest, w, active, offline, sheet, "normal", deltaCents);
    return {
      kind: "collision",
      roundNo: m,
      value: w,
      charges: [],
      selfDeltaCents: deltaCents,
      announcedTotal: null,
      note: `packed lane collision; chargers ${JSON.stringify(chargers)}`,
    };
  }

  accrue(state, digest, w, active, offline, sheet, "normal", deltaCents);
  const framed = entries.some(([, i]) => i === state.index) && intent.laneTargets.size === 0;
  const sorted = [...entries].sort((a, b) => a[0] - b[0] || a[1] - b[1]);
  const charges: ChargeEvent[] = sorted.map(([k, i]) => ({
    charger: i,
    cents: vals[k],
    toSelf: lanes[k] > 0,
    lane: k,
  }));
  const chargersSeen = new Set(entries.map(([, i]) => i));
  advanceRecharge(state, chargersSeen.size === 1 ? [...chargersSeen][0] : null);
  const announced = readAnnouncementFrom(state, m, digest, sheet.submitters);
  if (framed) {
    return {
      kind: "framed",
      roundNo: m,
      value: w,
      charges,
      selfDeltaCents: deltaCents,
      announcedTotal: announced,
      note: "trace names this member but no charge was sent",
    };
  }
  if (charges.length === 0) {
    return {
      kind: "idle",
      roundNo: m,
      value: w,
      charges: [],
      selfDeltaCents: 0,
      announcedTotal: announced,
      note: "",
    };
  }
  return {
    kind: "charged",
    roundNo: m,
    value: w,
    charges,
    selfDeltaCents: deltaCents,
    announcedTotal: announced,
    note: "",
  };
}

// -- rollback rounds

/** Correction round: everyone's own cell restores the pre-collision state. */
function processRollback(
  state: ClientGroupState,
  digest: RoundDigest,
  w: number,
  active: number[],
  offline: number[],
  sheet: RoundMaskSheet,
): RoundOutcome {
  const m = digest.roundNo;
  const col = state.collision!;
  const selfOnline = sheet.submitters.includes(state.index);

  const colSum = sheet.colSums.get(state.index);
  if (colSum === undefined) return fail(digest, w, "not an active column in rollback round");
  let expected = (state.bReported + BigInt(w) * colSum) & ring.MASK;
  if (selfOnline) {
    expected = ring.add(expected, shift(state, m, w));
    if (state.schedule.kind === "packed") {
      const v0 = state.schedule.laneValues(col.round0);
      col.xLanes!.forEach((xk, k) => {
        expected = ring.sub(expected, BigInt(v0[k] * xk) << BigInt(packing.SLOT_BITS * k));
      });
    } else {
      expected = ring.sub(expected, BigInt(col.value0 * col.xSelf) & ring.MASK);
    }
  }
  if (digest.bEntry !== expected) return fail(digest, w, "rollback balance mismatch");

  let undo: number;
  if (state.schedule.kind === "packed") {
    const v0 = state.schedule.laneValues(col.round0);
    undo = -col.xLanes!.reduce((acc, xk, k) => acc + v0[k] * xk, 0);
  } else {
    undo = -col.value0 * col.xSelf;
  }

  accrue(state, digest, w, active, offline, sheet, "rollback", undo);
  state.phase = "recharge";
  if (col.rechargeQueue.length === 0) {
    state.phase = "normal";
    state.collision = null;
  }
  return {
    kind: "resolution",
    roundNo: m,
    value: w,
    charges: [],
    selfDeltaCents: undo,
    announcedTotal: null,
    note: `rollback; recharge order ${JSON.stringify(col.rechargeQueue)}`,
  };
}

function findDigest(state: ClientGroupState, m: number): RoundDigest | null {
  for (const d of state.digests) if (d.roundNo === m) return d;
  return null;
}

// ---------------------------------------------------------------------------
// tracing, settling, audits

/**
 * Who charged in round m; [] for idle rounds. Works for any retained round;
 * resolution and burned rounds have no charger attribution and throw.
 */
export function trace(state: ClientGroupState, m: number, digest?: RoundDigest): ChargeEvent[] {
  const meta = state.roundMeta.get(m);
  if (!meta) throw new ProtocolError(`round ${m} unknown; catch up first`);
  if (meta.kind !== "normal") {
    throw new ProtocolError(`round ${m} is a ${meta.kind} round; nothing to trace`);
  }
  const d = digest ?? findDigest(state, m);
  if (!d) throw new ProtocolError(`digest for round ${m} no longer retained`);
  const sheet = sheetFor(state, m, meta.roster, meta.offline);
  const base = cBase(state, m, meta.value, sheet);
  const z = ring.sub(base, d.c);
  if (state.schedule.kind === "packed") {
    const entries = decodePackedCharges(state, m, z, sheet.submitters);
    if (entries === null) throw new ProtocolError("trace aggregate undecodable");
    const vals = state.schedule.laneValues(m);
    return [...entries]
      .sort((a, b) => a[0] - b[0] || a[1] - b[1])
      .map(([k, i]) => ({ charger: i, cents: vals[k], toSelf: false, lane: k }));
  }
  if (z === 0n) return [];
  const weight = BigInt(meta.value);
  for (const i of sheet.submitters) {
    if (z === ((weight << BigInt(i)) & ring.MASK)) {
      return [{ charger: i, cents: meta.value, toSelf: false, lane: null }];
    }
  }
  throw new ProtocolError("trace aggregate undecodable");
}

/** Fresh masked claim of the true balance, relayed to peers by the server. */
export function settlePrepare(state: ClientGroupState, settleRound: number): bigint {
  if (inResolution(state)) throw new ProtocolError("cannot settle during collision resolution");
  const claim = BigInt(state.balanceCents) & ring.MASK;
  return ring.add(claim, state.secret.settleMask(settleRound, state.index));
}

/** Recover everyone's true balance in cents from the settle broadcast. */
export function settle(
  state: ClientGroupState,
  settleRound: number,
  balances: Map<number, bigint>,
): Map<number, number> {
  if (inResolution(state)) throw new ProtocolError("cannot settle during collision resolution");
  const active = roster(state);
  const balKeys = [...balances.keys()].sort((a, b) => a - b);
  if (JSON.stringify(balKeys) !== JSON.stringify(active)) {
    throw new ProtocolError("settle vector does not match the active roster");
  }
  const out = new Map<number, number>();
  let total = 0;
  for (const k of active) {
    const word = ring.sub(balances.get(k)!, state.drift.get(k) ?? 0n);
    let cents: number;
    if (state.schedule.kind === "packed") {
      cents = packing.unpackSigned(word).reduce((a, b) => a + b, 0);
    } else {
      cents = Number(ring.signed(word));
    }
    out.set(k, cents);
    total += cents;
  }
  if (total !== 0) throw new ProtocolError("settled balances do not sum to zero");
  if (out.get(state.index) !== state.balanceCents) {
    throw new ProtocolError("own settled balance disagrees with local ledger");
  }
  return out;
}

/**
 * Names submitters whose vector sum cannot be a well-formed round vector.
 * A sum equal to the setup constant is the server's offline substitution and
 * always admissible (submitting it voluntarily is a no-op, not an attack).
 */
export function verifyMisbehaviorSums(
  state: ClientGroupState,
  m: number,
  sums: Map<number, bigint>,
): number[] {
  const meta = state.roundMeta.get(m);
  let active: number[];
  let value: number;
  let kind: RoundKind;
  if (meta) {
    active = meta.roster;
    value = meta.value;
    kind = meta.kind;
  } else if (m === state.nextRound) {
    active = roster(state, m);
    value = state.schedule.roundValue(m);
    kind = state.phase === "rollback" ? "rollback" : "normal";
  } else {
    throw new ProtocolError(`round ${m} unknown`);
  }
  const flagged: number[] = [];
  for (const i of active) {
    const sum = sums.get(i);
    if (sum === undefined) {
      flagged.push(i);
      continue;
    }
    if (sum === 1n) continue; // the server's offline substitution a = 1
    const row = state.secret.roundMaskRow(m, i, active);
    let rowSum = 0n;
    for (const v of row.values()) rowSum += v;
    const clean = ring.sub(sum, rowSum & ring.MASK);
    if (!sumAdmissible(state, m, active, value, kind, clean)) flagged.push(i);
  }
  return flagged;
}

function sumAdmissible(
  state: ClientGroupState,
  m: number,
  active: number[],
  value: number,
  kind: RoundKind,
  clean: bigint,
): boolean {
  if (kind === "normal") return clean === (coverBase(state, m) & ring.MASK);
  if (kind === "rollback") {
    const col0 = collisionRoundBefore(state, m);
    if (col0 === null) return false;
    if (state.schedule.kind === "packed") {
      const diff = ring.sub(state.schedule.packedUnit(m), clean);
      let lanes: number[];
      try {
        lanes = packing.unpackSigned(diff);
      } catch {
        return false;
      }
      const vals = state.schedule.laneValues(col0);
      return lanes.every((lane, k) => lane % vals[k] === 0);
    }
    const w0 = state.roundMeta.get(col0)!.value;
    const w2 = value;
    const n = active.length;
    for (let x = -1; x <= n; x++) {
      try {
        const cand = ring.add(1n, exactRingDiv(ring.neg(BigInt(w0 * x) & ring.MASK), w2));
        if (clean === cand) return true;
      } catch {
        return false;
      }
    }
    return false;
  }
  return true;
}

function collisionRoundBefore(state: ClientGroupState, m: number): number | null {
  for (let k = m - 1; k >= 0; k--) {
    const meta = state.roundMeta.get(k);
    if (!meta) return null;
    if (meta.kind === "normal") return k;
  }
  return null;
}

/** Judge a revealed cell: 'framed', 'charged', or 'tampered'. */
export function verifyInnocence(
  state: ClientGroupState,
  m: number,
  accused: number,
  target: number,
  revealed: bigint,
): "framed" | "charged" | "tampered" {
  const r = state.secret.deriveMask(MaskDomain.ROUND, m, accused, target);
  const clean = ring.sub(revealed, r);
  if (clean === 0n) return "framed";
  if (state.schedule.kind === "packed") {
    const vals = state.schedule.laneValues(m);
    const words = vals.map((v, k) => BigInt(v) << BigInt(packing.SLOT_BITS * k));
    for (let maskBits = 1; maskBits < 1 << packing.SLOTS; maskBits++) {
      let acc = 0n;
      for (let k = 0; k < packing.SLOTS; k++) if ((maskBits >> k) & 1) acc += words[k];
      if (clean === (acc & ring.MASK)) return "charged";
    }
    return "tampered";
  }
  if (clean === 1n) return "charged";
  return "tampered";
}

/** What a framed member asks the server to reveal. */
export function proveInnocenceRequest(
  state: ClientGroupState,
  m: number,
  target: number,
): { round: number; accused: number; target: number } {
  return { round: m, accused: state.index, target };
}

/** Replay missed round broadcasts in order; self rides as offline. */
export function catchUp(state: ClientGroupState, records: RoundDigest[]): RoundOutcome[] {
  const outcomes: RoundOutcome[] = [];
  for (const digest of records) {
    const out = processRoundDigest(state, digest);
    outcomes.push(out);
    if (out.kind === "integrity-failure" && !digest.rolledBack) {
      throw new ProtocolError(`catch-up failed at round ${digest.roundNo}: ${out.note}`);
    }
  }
  return outcomes;
}

/** Announcement channel word for the next round: masked total, or cover. */
export function buildAmountAnnouncement(
  state: ClientGroupState,
  totalCents: number | null,
): bigint {
  const word = BigInt(totalCents ?? 0) & ring.MASK;
  return ring.add(word, state.secret.announceMask(state.nextRound, state.index));
}

export function readAmountAnnouncement(
  state: ClientGroupState,
  m: number,
  announceSum: bigint,
  online: number[],
): number | null {
  let acc = announceSum;
  for (const i of online) acc = ring.sub(acc, state.secret.announceMask(m, i));
  const total = ring.signed(acc);
  return total === 0n ? null : Number(total);
}
