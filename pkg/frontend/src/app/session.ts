/**
 * Client runtime over the wire service.
 *
 * A MemberSession owns one member's protocol state for one group, talks to
 * the service through a WireApi and persists itself as one JSON document
 * after every processed round. The document is versioned and its round
 * number never decreases; loading an older document than what was already
 * saved is refused.
 *
 * Joining is key-first: initial members receive the group key out of band
 * and claim one of the setup slots. Members added later are invited by an
 * existing member, who performs the join call on their behalf, waits for the
 * membership event to ride a round, and exports a bundle with the key, the
 * token and a drift snapshot (the server cannot serve pre-join drift
 * history). Bundles are client-local documents: they carry 128-bit words as
 * decimal strings, which plain JSON readers in other stacks may not expect.
 *
 * Ring words inside the persisted state are decimal strings; JSON numbers
 * cannot carry 128 bits.
 */

import { ApiError, DigestWire, GroupConfigJson, WireApi, isWrongRound } from "./api.js";
import { SessionStore } from "./store.js";
import { b64d, b64e } from "../engine/bytes.js";
import { GroupSecret } from "../engine/masks.js";
import * as planner from "../engine/planner.js";
import * as proto from "../engine/protocol.js";
import { Schedule } from "../engine/schedule.js";
import * as wire from "../engine/wire.js";

export const STATE_VERSION = 1;

export class SdkError extends Error {}

/** A round failed verification; the protocol aborted or rolled it back. */
export class IntegrityAlert extends SdkError {}

export interface SessionOptions {
  /** How often to re-ask for an open round's digest. */
  pollIntervalMs?: number;
  /** How long to wait for a round to close before giving up. */
  roundTimeoutMs?: number;
  /** Incoming charges at or below this land pre-accepted in the review list. */
  autoAcceptThresholdCents?: number | null;
}

interface ResolvedOptions {
  pollIntervalMs: number;
  roundTimeoutMs: number;
  autoAcceptThresholdCents: number | null;
}

function resolveOptions(opts: SessionOptions): ResolvedOptions {
  return {
    pollIntervalMs: opts.pollIntervalMs ?? 50,
    roundTimeoutMs: opts.roundTimeoutMs ?? 60_000,
    autoAcceptThresholdCents: opts.autoAcceptThresholdCents ?? null,
  };
}

/** An incoming charge awaiting the member's accept / reject decision. */
export interface ReviewEntry {
  round: number;
  cents: number;
  charger: number | null;
  announcedTotal: number | null;
  autoAccepted: boolean;
  resolution: "pending" | "accepted" | "rejected";
}

/** Protocol trouble the member must see; acknowledged entries stay listed. */
export interface AlertEntry {
  round: number;
  kind: "integrity" | "framing";
  note: string;
  acknowledged: boolean;
}

export interface CreateGroupParams {
  n: number;
  schedule: Schedule;
  announcements?: boolean;
  roundPeriodMs?: number;
  onDemandRounds?: boolean;
  key?: Uint8Array;
}

// ---------------------------------------------------------------------------
// persisted-state codecs

type Json = Record<string, unknown>;

function intentJson(intent: proto.RoundIntent | null): Json | null {
  if (intent === null) return null;
  const lanes: Record<string, number> = {};
  for (const [k, v] of intent.laneTargets) lanes[String(k)] = v;
  return { target: intent.target, lane_targets: lanes, announce_total: intent.announceTotal };
}

function intentBack(data: Json | null): proto.RoundIntent | null {
  if (data === null) return null;
  const laneTargets = new Map<number, number>();
  for (const [k, v] of Object.entries(data.lane_targets as Record<string, number>)) {
    laneTargets.set(Number(k), v);
  }
  return {
    target: data.target as number | null,
    laneTargets,
    announceTotal: data.announce_total as number | null,
  };
}

function digestJson(d: proto.RoundDigest): Json {
  return {
    round_no: d.roundNo,
    v_prime: d.vPrime.toString(),
    c: d.c.toString(),
    b_entry: d.bEntry.toString(),
    status: d.status,
    offline: [...d.offline],
    events: [...d.events],
    announce_sum: d.announceSum === null ? null : d.announceSum.toString(),
    rolled_back: d.rolledBack,
  };
}

function digestBack(data: Json): proto.RoundDigest {
  return {
    roundNo: data.round_no as number,
    vPrime: BigInt(data.v_prime as string),
    c: BigInt(data.c as string),
    bEntry: BigInt(data.b_entry as string),
    status: data.status as proto.Status,
    offline: data.offline as number[],
    events: data.events as string[],
    announceSum: data.announce_sum === null ? null : BigInt(data.announce_sum as string),
    rolledBack: data.rolled_back as boolean,
  };
}

function metaJson(meta: proto.RoundMeta): Json {
  return {
    value: meta.value,
    roster: [...meta.roster],
    offline: [...meta.offline],
    kind: meta.kind,
    b_before: meta.bBefore.toString(),
    self_delta_cents: meta.selfDeltaCents,
  };
}

function metaBack(data: Json): proto.RoundMeta {
  return {
    value: data.value as number,
    roster: data.roster as number[],
    offline: data.offline as number[],
    kind: data.kind as proto.RoundKind,
    bBefore: BigInt(data.b_before as string),
    selfDeltaCents: data.self_delta_cents as number,
  };
}

function collisionJson(col: proto.CollisionState | null): Json | null {
  if (col === null) return null;
  return {
    round0: col.round0,
    value0: col.value0,
    x_self: col.xSelf,
    x_lanes: col.xLanes === null ? null : [...col.xLanes],
    own_intent: intentJson(col.ownIntent),
    chargers: [...col.chargers],
    recharge_queue: [...col.rechargeQueue],
  };
}

function collisionBack(data: Json | null): proto.CollisionState | null {
  if (data === null) return null;
  return {
    round0: data.round0 as number,
    value0: data.value0 as number,
    xSelf: data.x_self as number,
    xLanes: data.x_lanes === null ? null : (data.x_lanes as number[]),
    ownIntent: intentBack(data.own_intent as Json | null),
    chargers: data.chargers as number[],
    rechargeQueue: data.recharge_queue as number[],
  };
}

export function stateToJson(state: proto.ClientGroupState): Json {
  const members: Record<string, Json> = {};
  for (const [i, v] of state.members) {
    members[String(i)] = { join_round: v.joinRound, leave_round: v.leaveRound };
  }
  const drift: Record<string, string> = {};
  for (const [i, v] of state.drift) drift[String(i)] = v.toString();
  const roundMeta: Record<string, Json> = {};
  for (const [m, v] of state.roundMeta) roundMeta[String(m)] = metaJson(v);
  const sentIntents: Record<string, Json | null> = {};
  for (const [m, v] of state.sentIntents) sentIntents[String(m)] = intentJson(v);
  return {
    key: b64e(state.secret.key),
    index: state.index,
    mode: state.mode,
    schedule: state.schedule.toJson(),
    members,
    next_round: state.nextRound,
    b_reported: state.bReported.toString(),
    balance_cents: state.balanceCents,
    drift,
    digests: state.digests.map(digestJson),
    round_meta: roundMeta,
    phase: state.phase,
    collision: collisionJson(state.collision),
    sent_intents: sentIntents,
    settling: state.settling,
  };
}

export function stateFromJson(data: Json): proto.ClientGroupState {
  const members = new Map<number, proto.MemberView>();
  for (const [i, v] of Object.entries(data.members as Record<string, Json>)) {
    members.set(Number(i), {
      index: Number(i),
      joinRound: v.join_round as number,
      leaveRound: v.leave_round as number | null,
    });
  }
  const drift = new Map<number, bigint>();
  for (const [i, v] of Object.entries(data.drift as Record<string, string>)) {
    drift.set(Number(i), BigInt(v));
  }
  const roundMeta = new Map<number, proto.RoundMeta>();
  for (const [m, v] of Object.entries(data.round_meta as Record<string, Json>)) {
    roundMeta.set(Number(m), metaBack(v));
  }
  const sentIntents = new Map<number, proto.RoundIntent>();
  for (const [m, v] of Object.entries(data.sent_intents as Record<string, Json | null>)) {
    const intent = intentBack(v);
    if (intent) sentIntents.set(Number(m), intent);
  }
  return {
    secret: new GroupSecret(b64d(data.key as string)),
    index: data.index as number,
    mode: data.mode as proto.Mode,
    schedule: Schedule.fromJson(data.schedule as Json),
    members,
    nextRound: data.next_round as number,
    bReported: BigInt(data.b_reported as string),
    balanceCents: data.balance_cents as number,
    drift,
    digests: (data.digests as Json[]).map(digestBack),
    roundMeta,
    phase: data.phase as proto.Phase,
    collision: collisionBack(data.collision as Json | null),
    sentIntents,
    settling: data.settling as boolean,
    lastSeenEvents: null,
  };
}

/** Round broadcast out of the service's JSON envelope. */
export function digestFromWire(body: DigestWire): proto.RoundDigest {
  const core = wire.decodeDigestCore(b64d(body.digest));
  return {
    roundNo: body.round,
    vPrime: core.vPrime,
    c: core.c,
    bEntry: core.bEntry,
    status: core.status as proto.Status,
    offline: body.offline,
    events: body.events,
    announceSum: body.announce_sum === null ? null : wire.decodeWord(body.announce_sum),
    rolledBack: body.rolled_back,
  };
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

// ---------------------------------------------------------------------------
// the session

export interface InviteBundle {
  version: number;
  server: string;
  group_id: string;
  token: string;
  index: number;
  key: string;
  mode: string;
  schedule: Json;
  announcements: boolean;
  join_secret: string | null;
  members: Record<string, { join_round: number; leave_round: number | null }>;
  drift: Record<string, string>;
  next_round: number;
  last_meta: {
    round: number;
    value: number;
    roster: number[];
    offline: number[];
  } | null;
}

export class MemberSession {
  readonly options: ResolvedOptions;
  groupId: string;
  token: string;
  joinSecret: string | null;
  announcements: boolean;
  review: ReviewEntry[];
  alerts: AlertEntry[];
  state: proto.ClientGroupState;

  private constructor(
    readonly api: WireApi,
    readonly store: SessionStore,
    raw: Json,
    options: SessionOptions,
  ) {
    if (raw.version !== STATE_VERSION) {
      throw new SdkError(`unsupported session document version ${String(raw.version)}`);
    }
    this.options = resolveOptions(options);
    this.groupId = raw.group_id as string;
    this.token = raw.token as string;
    this.joinSecret = (raw.join_secret as string | null) ?? null;
    this.announcements = (raw.announcements as boolean) ?? false;
    this.review = (raw.review as ReviewEntry[]) ?? [];
    this.alerts = (raw.alerts as AlertEntry[]) ?? [];
    this.state = stateFromJson(raw.state as Json);
  }

  // -- persistence ---------------------------------------------------------

  save(): void {
    const prior = this.store.read();
    if (prior !== null) {
      const parsed = JSON.parse(prior) as { state?: { next_round?: number } };
      if ((parsed.state?.next_round ?? 0) > this.state.nextRound) {
        throw new SdkError("refusing to save a session older than the stored one");
      }
    }
    this.store.write(
      JSON.stringify({
        version: STATE_VERSION,
        server: this.api.baseUrl,
        group_id: this.groupId,
        token: this.token,
        join_secret: this.joinSecret,
        announcements: this.announcements,
        review: this.review,
        alerts: this.alerts,
        state: stateToJson(this.state),
      }),
    );
  }

  static load(api: WireApi, store: SessionStore, options: SessionOptions = {}): MemberSession {
    const raw = store.read();
    if (raw === null) throw new SdkError("no stored session");
    return new MemberSession(api, store, JSON.parse(raw) as Json, options);
  }

  private static writeInitial(
    api: WireApi,
    store: SessionStore,
    fields: {
      groupId: string;
      token: string;
      joinSecret: string | null;
      announcements: boolean;
      state: proto.ClientGroupState;
    },
    options: SessionOptions,
  ): MemberSession {
    if (store.read() !== null) throw new SdkError("a session is already stored there");
    store.write(
      JSON.stringify({
        version: STATE_VERSION,
        server: api.baseUrl,
        group_id: fields.groupId,
        token: fields.token,
        join_secret: fields.joinSecret,
        announcements: fields.announcements,
        review: [],
        alerts: [],
        state: stateToJson(fields.state),
      }),
    );
    return MemberSession.load(api, store, options);
  }

  // -- constructors ----------------------------------------------------------

  /** Create a group, claim the first member slot, persist the session. */
  static async createGroup(
    api: WireApi,
    store: SessionStore,
    params: CreateGroupParams,
    options: SessionOptions = {},
  ): Promise<MemberSession> {
    const key = params.key ?? randomKey();
    const secret = new GroupSecret(key);
    const config: GroupConfigJson = {
      n: params.n,
      mode: "semihonest",
      schedule: params.schedule.toJson(),
      round_period_ms: params.roundPeriodMs ?? 1000,
      offline_substitution: true,
      announcements: params.announcements ?? false,
      on_demand_rounds: params.onDemandRounds ?? false,
    };
    const created = await api.createGroup(config, wire.encodeWord(proto.setupConstant()));
    const got = await api.join(created.group_id, created.join_secret);
    const state = proto.setupClient(secret, got.index, params.n, "semihonest", params.schedule);
    return MemberSession.writeInitial(
      api,
      store,
      {
        groupId: created.group_id,
        token: got.token,
        joinSecret: created.join_secret,
        announcements: config.announcements,
        state,
      },
      options,
    );
  }

  /** Claim a setup slot of a fresh group (key received out of band). */
  static async joinGroup(
    api: WireApi,
    store: SessionStore,
    groupId: string,
    joinSecret: string,
    key: Uint8Array,
    options: SessionOptions = {},
  ): Promise<MemberSession> {
    const secret = new GroupSecret(key);
    const got = await api.join(groupId, joinSecret);

    const bail = async (message: string): Promise<never> => {
      // the join above already claimed a membership; hand it back so the
      // group is not stuck substituting a ghost forever
      await api.leave(groupId, got.token, true).catch(() => undefined);
      throw new SdkError(message);
    };

    if (got.config.mode !== "semihonest") {
      return bail(
        "this group runs in malicious mode, which the web client does not support; " +
          "use the command-line client",
      );
    }
    if (!proto.verifySetupConstant(wire.decodeWord(got.a))) {
      return bail("server's setup constant does not match the group key");
    }
    if (got.join_round !== 0) {
      return bail("group is already running; ask a member for an invite bundle");
    }
    const schedule = Schedule.fromJson(got.config.schedule);
    const state = proto.setupClient(secret, got.index, got.config.n, "semihonest", schedule);
    return MemberSession.writeInitial(
      api,
      store,
      {
        groupId,
        token: got.token,
        joinSecret,
        announcements: got.config.announcements,
        state,
      },
      options,
    );
  }

  /**
   * Add a member on their behalf and build their bootstrap bundle. Blocks
   * until the join event has ridden a round: the bundle must carry the drift
   * snapshot of a state that already knows the newcomer.
   */
  async invite(): Promise<InviteBundle> {
    if (this.joinSecret === null) throw new SdkError("this session holds no join secret");
    await this.catchUp();
    const got = await this.api.join(this.groupId, this.joinSecret);
    const deadline = Date.now() + this.options.roundTimeoutMs;
    while (this.state.nextRound <= got.join_round - 1 || proto.inResolution(this.state)) {
      if (Date.now() > deadline) {
        throw new SdkError("timed out waiting for the join event to ride a round");
      }
      await this.step();
    }
    const st = this.state;
    if (!st.members.has(got.index)) {
      throw new SdkError("join event never arrived; cannot build the bundle");
    }
    // the snapshot's newest round is still rollback-able by a late report;
    // hand over its meta so the newcomer can revert the inherited drift
    const last = st.roundMeta.get(st.nextRound - 1);
    const lastMeta =
      last && last.kind === "normal"
        ? {
            round: st.nextRound - 1,
            value: last.value,
            roster: [...last.roster],
            offline: [...last.offline],
          }
        : null;
    const members: InviteBundle["members"] = {};
    for (const [i, v] of st.members) {
      members[String(i)] = { join_round: v.joinRound, leave_round: v.leaveRound };
    }
    const drift: Record<string, string> = {};
    for (const [i, v] of st.drift) drift[String(i)] = v.toString();
    return {
      version: STATE_VERSION,
      server: this.api.baseUrl,
      group_id: this.groupId,
      token: got.token,
      index: got.index,
      key: b64e(st.secret.key),
      mode: st.mode,
      schedule: st.schedule.toJson(),
      announcements: this.announcements,
      join_secret: this.joinSecret,
      members,
      drift,
      next_round: st.nextRound,
      last_meta: lastMeta,
    };
  }

  /** Late joiner: state built from an inviter's bundle, no HTTP needed. */
  static fromBundle(
    api: WireApi,
    store: SessionStore,
    bundle: InviteBundle,
    options: SessionOptions = {},
  ): MemberSession {
    if (bundle.version !== STATE_VERSION) throw new SdkError("unsupported bundle version");
    if (bundle.mode !== "semihonest") {
      throw new SdkError("malicious-mode bundles are not supported by the web client");
    }
    const members = new Map<number, proto.MemberView>();
    for (const [i, v] of Object.entries(bundle.members)) {
      members.set(Number(i), {
        index: Number(i),
        joinRound: v.join_round,
        leaveRound: v.leave_round,
      });
    }
    const drift = new Map<number, bigint>();
    for (const [i, v] of Object.entries(bundle.drift)) drift.set(Number(i), BigInt(v));
    const state: proto.ClientGroupState = {
      secret: new GroupSecret(b64d(bundle.key)),
      index: bundle.index,
      mode: "semihonest",
      schedule: Schedule.fromJson(bundle.schedule),
      members,
      nextRound: bundle.next_round,
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
    if (bundle.last_meta) {
      state.roundMeta.set(bundle.last_meta.round, {
        value: bundle.last_meta.value,
        roster: bundle.last_meta.roster,
        offline: bundle.last_meta.offline,
        kind: "normal",
        bBefore: 0n,
        selfDeltaCents: 0,
      });
    }
    return MemberSession.writeInitial(
      api,
      store,
      {
        groupId: bundle.group_id,
        token: bundle.token,
        joinSecret: bundle.join_secret,
        announcements: bundle.announcements,
        state,
      },
      options,
    );
  }

  // -- syncing ---------------------------------------------------------------

  /** Process every round the server has that we have not. */
  async catchUp(): Promise<proto.RoundOutcome[]> {
    const entries = await this.api.log(this.groupId, this.token, this.state.nextRound);
    const outcomes: proto.RoundOutcome[] = [];
    for (const body of entries) {
      const digest = digestFromWire(body);
      const out = proto.processRoundDigest(this.state, digest);
      this.noteOutcome(out);
      outcomes.push(out);
      if (out.kind === "integrity-failure" && !digest.rolledBack) {
        await this.api.report(this.groupId, this.token, digest.roundNo);
        break; // resync after the rollback lands
      }
    }
    if (outcomes.length) this.save();
    return outcomes;
  }

  private async pollDigest(m: number): Promise<proto.RoundDigest> {
    const deadline = Date.now() + this.options.roundTimeoutMs;
    for (;;) {
      const body = await this.api.digest(this.groupId, this.token, m);
      if (body !== null) return digestFromWire(body);
      if (Date.now() > deadline) {
        throw new SdkError(`round ${m} never closed (waited ${this.options.roundTimeoutMs}ms)`);
      }
      await sleep(this.options.pollIntervalMs);
    }
  }

  /** Submit one round (intent, cover or resolution vector) and verify it. */
  async step(intent: proto.RoundIntent | null = null): Promise<proto.RoundOutcome> {
    const st = this.state;
    for (let attempt = 0; attempt < 8; attempt++) {
      await this.catchUp();
      if (st.settling) throw new SdkError("group has settled");
      const m = st.nextRound;
      const vec =
        st.phase === "rollback"
          ? proto.collisionResolutionNext(st)
          : proto.buildRoundVector(st, intent ?? proto.idleIntent());
      let announce: string | null = null;
      if (this.announcements) {
        announce = wire.encodeWord(
          proto.buildAmountAnnouncement(st, intent ? intent.announceTotal : null),
        );
      }
      try {
        await this.api.submit(
          this.groupId,
          this.token,
          m,
          b64e(wire.encodeSubmission(vec)),
          announce,
        );
      } catch (err) {
        if (isWrongRound(err)) continue; // round moved under us; resync and retry
        throw err;
      }
      const digest = await this.pollDigest(m);
      const out = proto.processRoundDigest(st, digest);
      this.noteOutcome(out);
      if (out.kind === "integrity-failure" && !digest.rolledBack) {
        await this.api.report(this.groupId, this.token, m);
      }
      this.save();
      return out;
    }
    throw new SdkError("could not land a submission; server kept moving");
  }

  private noteOutcome(out: proto.RoundOutcome): void {
    if (out.selfDeltaCents > 0) {
      const chargers = new Set(out.charges.filter((ev) => ev.toSelf).map((ev) => ev.charger));
      const threshold = this.options.autoAcceptThresholdCents;
      const autoAccepted = threshold !== null && out.selfDeltaCents <= threshold;
      this.review.push({
        round: out.roundNo,
        cents: out.selfDeltaCents,
        charger: chargers.size === 1 ? [...chargers][0] : null,
        announcedTotal: out.announcedTotal,
        autoAccepted,
        resolution: autoAccepted ? "accepted" : "pending",
      });
    }
    if (out.kind === "integrity-failure") {
      this.alerts.push({
        round: out.roundNo,
        kind: "integrity",
        note: out.note,
        acknowledged: false,
      });
    } else if (out.kind === "framed") {
      this.alerts.push({ round: out.roundNo, kind: "framing", note: out.note, acknowledged: false });
    }
  }

  // -- commands ----------------------------------------------------------------

  /** Run a transfer plan to completion, riding out any collision. */
  async charge(
    target: number,
    amountCents: number,
    announceTotal: number | null = null,
  ): Promise<proto.RoundOutcome[]> {
    const st = this.state;
    const plan = planner.planTransfer(amountCents, target, st.schedule);
    const steps = [...plan.steps];
    const outcomes: proto.RoundOutcome[] = [];
    let announced = false;
    let guard = 0;
    while (steps.length) {
      guard += 1;
      if (guard > 64 * (plan.steps.length + 2)) {
        throw new SdkError("charge plan failed to converge");
      }
      await this.catchUp();
      if (proto.inResolution(st)) {
        outcomes.push(await this.step());
        continue;
      }
      const step = steps[0];
      if (!this.positionMatches(step, st.nextRound)) {
        outcomes.push(await this.step()); // idle until the value comes around
        continue;
      }
      const total = announced ? null : announceTotal;
      let intent: proto.RoundIntent;
      if (st.schedule.kind === "packed") {
        const lanes = new Map(step.lanes.map((k) => [k, target]));
        intent = proto.chargeLanesIntent(lanes, total);
      } else {
        intent = proto.chargeIntent(target, total);
      }
      const out = await this.step(intent);
      outcomes.push(out);
      if (out.kind === "charged" || out.kind === "collision") {
        // a collision re-issues the charge through the recharge queue
        steps.shift();
        announced = true;
      } else if (out.kind === "integrity-failure") {
        throw new IntegrityAlert(`round ${out.roundNo}: ${out.note}`);
      }
    }
    while (proto.inResolution(st)) outcomes.push(await this.step());
    return outcomes;
  }

  private positionMatches(step: planner.PlanStep, m: number): boolean {
    const sched = this.state.schedule;
    if (sched.kind === "unit") return true;
    if (sched.kind === "cycle") return m % sched.cycle.length === step.cyclePos;
    return sched.window(m) === step.cyclePos;
  }

  /**
   * Split a whole-group bill: charge every other active member an equal
   * share of the total, one plan after another. Cents that do not divide
   * evenly go to the lowest member indices. Each per-member plan announces
   * the bill total on its first charge round when announcements are on.
   */
  async splitBill(totalCents: number): Promise<{
    shares: Map<number, number>;
    outcomes: proto.RoundOutcome[];
  }> {
    if (totalCents <= 0) throw new SdkError("bill total must be positive");
    await this.catchUp();
    const active = proto.roster(this.state);
    const share = Math.floor(totalCents / active.length);
    let remainder = totalCents - share * active.length;
    const shares = new Map<number, number>();
    for (const i of active) {
      shares.set(i, share + (remainder > 0 ? 1 : 0));
      remainder -= remainder > 0 ? 1 : 0;
    }
    const outcomes: proto.RoundOutcome[] = [];
    for (const i of active) {
      if (i === this.state.index) continue;
      const cents = shares.get(i)!;
      if (cents === 0) continue;
      outcomes.push(...(await this.charge(i, cents, totalCents)));
    }
    return { shares, outcomes };
  }

  /** Counter-charge the member who charged us in round m. */
  async reject(m: number): Promise<proto.RoundOutcome[]> {
    await this.catchUp();
    const st = this.state;
    const meta = st.roundMeta.get(m);
    if (!meta) throw new SdkError(`round ${m} unknown; catch up first`);
    if (meta.selfDeltaCents <= 0) throw new SdkError(`round ${m} did not charge this member`);
    const events = proto.trace(st, m);
    const chargers = new Set(events.map((ev) => ev.charger));
    if (chargers.size === 0) throw new SdkError(`round ${m} carried no charge`);
    if (chargers.size > 1) {
      throw new SdkError("several members charged that round; reject each by hand");
    }
    const charger = [...chargers][0];
    if (charger === st.index) throw new SdkError("cannot reject own charge");
    const outcomes = await this.charge(charger, meta.selfDeltaCents);
    const entry = this.review.find((e) => e.round === m);
    if (entry) entry.resolution = "rejected";
    this.save();
    return outcomes;
  }

  /** Mark an incoming charge as reviewed and accepted. */
  accept(m: number): void {
    const entry = this.review.find((e) => e.round === m);
    if (!entry) throw new SdkError(`no pending charge for round ${m}`);
    entry.resolution = "accepted";
    this.save();
  }

  acknowledgeAlert(round: number): void {
    for (const alert of this.alerts) if (alert.round === round) alert.acknowledged = true;
    this.save();
  }

  /** Freeze the group and recover everyone's true balance in cents. */
  async settle(): Promise<Map<number, number>> {
    await this.catchUp();
    const st = this.state;
    if (proto.inResolution(st)) {
      throw new SdkError("collision resolution pending; run catch-up or steps first");
    }
    const got = await this.api.settle(this.groupId, this.token);
    const balances = new Map<number, bigint>();
    for (const [k, v] of Object.entries(got.balances)) {
      balances.set(Number(k), wire.decodeWord(v));
    }
    let result: Map<number, number>;
    try {
      result = proto.settle(st, got.settle_round, balances);
    } catch (err) {
      if (err instanceof proto.ProtocolError) {
        throw new IntegrityAlert(`settle verification failed: ${err.message}`);
      }
      throw err;
    }
    st.settling = true;
    this.save();
    return result;
  }

  /**
   * Ask the server to reveal the accused's cells of round m and judge them.
   * Returns a verdict per target: 'framed' (pure mask), 'charged', or
   * 'tampered'; 'unavailable' when the round's cells were already pruned.
   */
  async dispute(m: number, accused: number | null = null): Promise<Map<number, string>> {
    await this.catchUp();
    const st = this.state;
    const who = accused ?? st.index;
    const meta = st.roundMeta.get(m);
    if (!meta) throw new SdkError(`round ${m} unknown; catch up first`);
    const verdicts = new Map<number, string>();
    for (const j of meta.roster) {
      const entry = await this.api.reveal(this.groupId, this.token, m, who, j);
      if (entry === null) {
        verdicts.set(j, "unavailable");
        continue;
      }
      verdicts.set(j, proto.verifyInnocence(st, m, who, j, wire.decodeWord(entry)));
    }
    return verdicts;
  }

  /** Leave the group: requires a zero balance, rides one final round. */
  async leave(): Promise<number> {
    await this.catchUp();
    const st = this.state;
    if (st.balanceCents !== 0) {
      throw new SdkError(`balance is ${st.balanceCents} cents; settle up before leaving`);
    }
    const leaveRound = await this.api.leave(this.groupId, this.token, true);
    while (st.nextRound < leaveRound) await this.step();
    this.save();
    return leaveRound;
  }
}

function randomKey(): Uint8Array {
  const out = new Uint8Array(16);
  const cryptoObj = (globalThis as { crypto?: { getRandomValues(a: Uint8Array): Uint8Array } })
    .crypto;
  if (!cryptoObj) throw new SdkError("no crypto.getRandomValues available");
  cryptoObj.getRandomValues(out);
  return out;
}

export { ApiError };
