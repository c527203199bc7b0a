// Round-trip tests for the client state machine against a local aggregator
// that mirrors the server's blind arithmetic: scale each submitted vector by
// the public round value, add columns into balances, subtract the setup
// constant per active member, publish v'/c/b. No HTTP, no crypto library on
// the aggregator side — it only ever adds ring words.
import { describe, expect, it } from "vitest";

import { GroupSecret } from "../src/engine/masks.js";
import * as proto from "../src/engine/protocol.js";
import * as ring from "../src/engine/ring.js";
import { Schedule, packedSchedule, powersSchedule, unitSchedule } from "../src/engine/schedule.js";
import { hexToBytes } from "../src/engine/bytes.js";

const KEY = hexToBytes("00112233445566778899aabbccddeeff");

interface ToyServer {
  schedule: Schedule;
  a: bigint;
  balances: Map<number, bigint>;
  nextRound: number;
  pendingEvents: string[];
  /** Per-round per-member digests (b is member-specific). */
  log: Map<number, proto.RoundDigest>[];
}

function toyServer(n: number, schedule: Schedule): ToyServer {
  const balances = new Map<number, bigint>();
  for (let i = 1; i <= n; i++) balances.set(i, 0n);
  return { schedule, a: 1n, balances, nextRound: 0, pendingEvents: [], log: [] };
}

/** Close one round: submissions maps member index -> vector over `roster`. */
function closeRound(
  srv: ToyServer,
  roster: number[],
  submissions: Map<number, bigint[]>,
  opts: { offline?: number[]; announce?: Map<number, bigint> } = {},
): Map<number, proto.RoundDigest> {
  const m = srv.nextRound;
  const value = BigInt(srv.schedule.roundValue(m));
  const offline = (opts.offline ?? []).slice().sort((a, b) => a - b);
  const pos = new Map(roster.map((i, k) => [i, k]));
  const wa = (value * srv.a) & ring.MASK;
  const col = new Array<bigint>(roster.length).fill(0n);
  let c = 0n;
  for (const i of roster) {
    let vec = submissions.get(i);
    if (offline.includes(i) || !vec) {
      vec = new Array<bigint>(roster.length).fill(0n);
      vec[pos.get(i)!] = srv.a;
    }
    vec.forEach((x, k) => {
      col[k] = (col[k] + value * x) & ring.MASK;
    });
    c += (((value * vec[pos.get(i)!]) & ring.MASK) - wa) << BigInt(i);
  }
  const vPrime = col.reduce((acc, x) => ring.add(acc, x), 0n);
  c &= ring.MASK;
  let announceSum: bigint | null = null;
  if (opts.announce) {
    announceSum = 0n;
    for (const i of roster) {
      if (offline.includes(i)) continue;
      announceSum = ring.add(announceSum, opts.announce.get(i) ?? 0n);
    }
  }
  const events = srv.pendingEvents.splice(0);
  const out = new Map<number, proto.RoundDigest>();
  for (const i of roster) {
    srv.balances.set(i, ring.add(srv.balances.get(i) ?? 0n, ring.sub(col[pos.get(i)!], wa)));
    out.set(i, {
      roundNo: m,
      vPrime,
      c,
      bEntry: srv.balances.get(i)!,
      status: proto.Status.OK,
      offline,
      events,
      announceSum,
      rolledBack: false,
    });
  }
  srv.log.push(out);
  srv.nextRound = m + 1;
  return out;
}

function mkClients(n: number, schedule: Schedule): proto.ClientGroupState[] {
  const secret = new GroupSecret(KEY);
  const out: proto.ClientGroupState[] = [];
  for (let i = 1; i <= n; i++) {
    out.push(proto.setupClient(new GroupSecret(KEY), i, n, "semihonest", schedule));
  }
  void secret;
  return out;
}

/** Run one full round: collect vectors per intent, close, process digests. */
function playRound(
  srv: ToyServer,
  clients: proto.ClientGroupState[],
  intents: Map<number, proto.RoundIntent>,
  opts: { offline?: number[]; announceTotals?: Map<number, number | null> } = {},
): Map<number, proto.RoundOutcome> {
  const offline = opts.offline ?? [];
  const roster = proto.roster(clients[0], srv.nextRound);
  const subs = new Map<number, bigint[]>();
  const announce = new Map<number, bigint>();
  for (const cl of clients) {
    if (!roster.includes(cl.index) || offline.includes(cl.index)) continue;
    if (cl.phase === "rollback") {
      subs.set(cl.index, proto.collisionResolutionNext(cl));
    } else {
      subs.set(cl.index, proto.buildRoundVector(cl, intents.get(cl.index) ?? proto.idleIntent()));
    }
    if (opts.announceTotals) {
      announce.set(
        cl.index,
        proto.buildAmountAnnouncement(cl, opts.announceTotals.get(cl.index) ?? null),
      );
    }
  }
  const digests = closeRound(srv, roster, subs, {
    offline,
    announce: opts.announceTotals ? announce : undefined,
  });
  const outcomes = new Map<number, proto.RoundOutcome>();
  for (const cl of clients) {
    if (!roster.includes(cl.index) || offline.includes(cl.index)) continue;
    outcomes.set(cl.index, proto.processRoundDigest(cl, digests.get(cl.index)!));
  }
  return outcomes;
}

function settleAll(srv: ToyServer, clients: proto.ClientGroupState[]): Map<number, number>[] {
  return clients.map((cl) => proto.settle(cl, srv.nextRound, new Map(srv.balances)));
}

describe("single-value rounds", () => {
  it("keeps everyone at zero through idle rounds", () => {
    const sched = powersSchedule([7]);
    const srv = toyServer(3, sched);
    const clients = mkClients(3, sched);
    for (let r = 0; r < 3; r++) {
      const outs = playRound(srv, clients, new Map());
      for (const o of outs.values()) {
        expect(o.kind).toBe("idle");
        expect(o.selfDeltaCents).toBe(0);
      }
    }
    for (const res of settleAll(srv, clients)) {
      expect([...res.values()]).toEqual([0, 0, 0]);
    }
  });

  it("moves value w from charger to target and survives settle", () => {
    const sched = powersSchedule([7]);
    const srv = toyServer(3, sched);
    const clients = mkClients(3, sched);
    const outs = playRound(srv, clients, new Map([[1, proto.chargeIntent(2)]]));
    expect(outs.get(1)!.kind).toBe("charged");
    expect(outs.get(1)!.selfDeltaCents).toBe(-7);
    expect(outs.get(2)!.selfDeltaCents).toBe(7);
    expect(outs.get(2)!.charges).toEqual([{ charger: 1, cents: 7, toSelf: true, lane: null }]);
    expect(outs.get(3)!.selfDeltaCents).toBe(0);
    expect(outs.get(3)!.charges[0].toSelf).toBe(false);
    playRound(srv, clients, new Map());
    for (const res of settleAll(srv, clients)) {
      expect(res.get(1)).toBe(-7);
      expect(res.get(2)).toBe(7);
      expect(res.get(3)).toBe(0);
    }
  });

  it("reads the amount announcement riding a charge round", () => {
    const sched = unitSchedule();
    const srv = toyServer(3, sched);
    const clients = mkClients(3, sched);
    const outs = playRound(srv, clients, new Map([[1, proto.chargeIntent(3)]]), {
      announceTotals: new Map([[1, 8056]]),
    });
    for (const o of outs.values()) expect(o.announcedTotal).toBe(8056);
    const idle = playRound(srv, clients, new Map(), {
      announceTotals: new Map(),
    });
    for (const o of idle.values()) expect(o.announcedTotal).toBeNull();
  });

  it("attributes retained rounds with trace()", () => {
    const sched = powersSchedule([5]);
    const srv = toyServer(3, sched);
    const clients = mkClients(3, sched);
    playRound(srv, clients, new Map([[2, proto.chargeIntent(3)]]));
    playRound(srv, clients, new Map());
    expect(proto.trace(clients[0], 0)).toEqual([
      { charger: 2, cents: 5, toSelf: false, lane: null },
    ]);
    expect(proto.trace(clients[0], 1)).toEqual([]);
  });
});

describe("collision resolution", () => {
  it("rolls back a two-charger round and recharges in index order", () => {
    // round values must be powers of two: the target's correction is a
    // negative multiple of w and only divides exactly against w's low bits
    const sched = powersSchedule([4]);
    const srv = toyServer(4, sched);
    const clients = mkClients(4, sched);

    // round 0: members 1 and 2 both charge member 3
    const outs0 = playRound(
      srv,
      clients,
      new Map([
        [1, proto.chargeIntent(3)],
        [2, proto.chargeIntent(3)],
      ]),
    );
    for (const o of outs0.values()) expect(o.kind).toBe("collision");
    for (const cl of clients) expect(cl.phase).toBe("rollback");
    expect(outs0.get(3)!.selfDeltaCents).toBe(8); // both units landed

    // round 1: prescribed rollback restores pre-collision balances
    const outs1 = playRound(srv, clients, new Map());
    for (const o of outs1.values()) expect(o.kind).toBe("resolution");
    expect(outs1.get(3)!.selfDeltaCents).toBe(-8);
    for (const cl of clients) expect(cl.phase).toBe("recharge");
    expect(clients.map((c) => c.balanceCents)).toEqual([0, 0, 0, 0]);

    // rounds 2-3: queued chargers resend one per round, lowest index first
    const outs2 = playRound(srv, clients, new Map());
    expect(outs2.get(4)!.charges).toEqual([{ charger: 1, cents: 4, toSelf: false, lane: null }]);
    const outs3 = playRound(srv, clients, new Map());
    expect(outs3.get(4)!.charges).toEqual([{ charger: 2, cents: 4, toSelf: false, lane: null }]);
    for (const cl of clients) expect(cl.phase).toBe("normal");

    expect(clients.map((c) => c.balanceCents)).toEqual([-4, -4, 8, 0]);
    for (const res of settleAll(srv, clients)) {
      expect(res.get(3)).toBe(8);
    }
  });

  it("queues a third charge arriving during the recharge window", () => {
    const sched = unitSchedule();
    const srv = toyServer(3, sched);
    const clients = mkClients(3, sched);
    playRound(
      srv,
      clients,
      new Map([
        [1, proto.chargeIntent(3)],
        [2, proto.chargeIntent(3)],
      ]),
    );
    playRound(srv, clients, new Map()); // rollback
    // member 3 may not inject a fresh charge while the queue drains
    expect(() => proto.buildRoundVector(clients[2], proto.chargeIntent(1))).toThrow(
      /queued until the recharge window/,
    );
    playRound(srv, clients, new Map());
    playRound(srv, clients, new Map());
    expect(clients.map((c) => c.balanceCents)).toEqual([-1, -1, 2]);
  });
});

describe("tamper detection", () => {
  function tamperedDigest(d: proto.RoundDigest, edits: Partial<proto.RoundDigest>): proto.RoundDigest {
    return { ...d, ...edits };
  }

  it("refuses a digest with a corrupted integrity poll", () => {
    const sched = unitSchedule();
    const srv = toyServer(3, sched);
    const clients = mkClients(3, sched);
    const roster = [1, 2, 3];
    const subs = new Map<number, bigint[]>();
    for (const cl of clients) subs.set(cl.index, proto.buildRoundVector(cl, proto.idleIntent()));
    const digests = closeRound(srv, roster, subs);
    const bad = tamperedDigest(digests.get(1)!, { vPrime: ring.add(digests.get(1)!.vPrime, 1n) });
    const out = proto.processRoundDigest(clients[0], bad);
    expect(out.kind).toBe("integrity-failure");
    expect(out.note).toMatch(/integrity poll/);
    expect(clients[0].nextRound).toBe(0); // state did not advance
  });

  it("flags framing when the trace names an idle member", () => {
    const sched = unitSchedule();
    const srv = toyServer(3, sched);
    const clients = mkClients(3, sched);
    const roster = [1, 2, 3];
    const subs = new Map<number, bigint[]>();
    for (const cl of clients) subs.set(cl.index, proto.buildRoundVector(cl, proto.idleIntent()));
    const digests = closeRound(srv, roster, subs);
    // a lying server steers the trace at member 1 without touching balances
    const frame = (d: proto.RoundDigest) =>
      tamperedDigest(d, { c: ring.sub(d.c, 2n) }); // w<<1 = 2
    const out1 = proto.processRoundDigest(clients[0], frame(digests.get(1)!));
    expect(out1.kind).toBe("framed");
    expect(out1.selfDeltaCents).toBe(0);
    const out2 = proto.processRoundDigest(clients[1], frame(digests.get(2)!));
    expect(out2.kind).toBe("charged");
    expect(out2.charges[0].charger).toBe(1);
  });

  it("judges revealed cells as framed, charged, or tampered", () => {
    const sched = unitSchedule();
    const srv = toyServer(3, sched);
    const clients = mkClients(3, sched);
    const m = 0;
    const vec1 = proto.buildRoundVector(clients[0], proto.chargeIntent(2));
    // cells revealed by the server are the raw submitted words
    const roster = [1, 2, 3];
    const cellTo2 = vec1[roster.indexOf(2)];
    const cellTo3 = vec1[roster.indexOf(3)];
    expect(proto.verifyInnocence(clients[2], m, 1, 2, cellTo2)).toBe("charged");
    expect(proto.verifyInnocence(clients[2], m, 1, 3, cellTo3)).toBe("framed");
    expect(proto.verifyInnocence(clients[2], m, 1, 3, ring.add(cellTo3, 5n))).toBe("tampered");
    expect(proto.proveInnocenceRequest(clients[0], m, 3)).toEqual({
      round: m,
      accused: 1,
      target: 3,
    });
  });

  it("flags a submitter whose vector sum is malformed", () => {
    const sched = unitSchedule();
    const srv = toyServer(3, sched);
    const clients = mkClients(3, sched);
    const roster = [1, 2, 3];
    const subs = new Map<number, bigint[]>();
    for (const cl of clients) subs.set(cl.index, proto.buildRoundVector(cl, proto.idleIntent()));
    const sums = new Map<number, bigint>();
    for (const [i, vec] of subs) sums.set(i, vec.reduce((a, b) => ring.add(a, b), 0n));
    expect(proto.verifyMisbehaviorSums(clients[0], 0, sums)).toEqual([]);
    sums.set(2, ring.add(sums.get(2)!, 1n));
    expect(proto.verifyMisbehaviorSums(clients[0], 0, sums)).toEqual([2]);
    void roster;
  });
});

describe("server-side rollback events", () => {
  it("burns a refused round when the next digest confirms the rollback", () => {
    const sched = unitSchedule();
    const srv = toyServer(3, sched);
    const clients = mkClients(3, sched);
    const roster = [1, 2, 3];
    let subs = new Map<number, bigint[]>();
    for (const cl of clients) subs.set(cl.index, proto.buildRoundVector(cl, proto.idleIntent()));
    const digests = closeRound(srv, roster, subs);

    // member 1's copy is corrupted; it refuses and reports
    const bad = { ...digests.get(1)!, bEntry: ring.add(digests.get(1)!.bEntry, 9n) };
    expect(proto.processRoundDigest(clients[0], bad).kind).toBe("integrity-failure");
    expect(clients[0].nextRound).toBe(0);
    // members 2 and 3 saw a clean digest and accepted
    proto.processRoundDigest(clients[1], digests.get(2)!);
    proto.processRoundDigest(clients[2], digests.get(3)!);

    // the server voids round 0; member 1 re-fetches it flagged and burns it
    for (const i of roster) srv.balances.set(i, 0n);
    srv.pendingEvents.push("rollback:0");
    const flagged = { ...digests.get(1)!, rolledBack: true };
    expect(proto.processRoundDigest(clients[0], flagged).note).toMatch(/rolled back/);
    expect(clients[0].nextRound).toBe(1);

    subs = new Map();
    for (const cl of clients) subs.set(cl.index, proto.buildRoundVector(cl, proto.idleIntent()));
    const replay = closeRound(srv, roster, subs);
    for (const cl of clients) {
      const out = proto.processRoundDigest(cl, replay.get(cl.index)!);
      expect(out.kind).toBe("idle");
      expect(cl.nextRound).toBe(2);
      expect(cl.roundMeta.get(0)!.kind).toBe("burned");
    }
    for (const res of settleAll(srv, clients)) {
      expect([...res.values()]).toEqual([0, 0, 0]);
    }
  });

  it("skips a burned round it never fetched via the rollback event", () => {
    const sched = unitSchedule();
    const srv = toyServer(3, sched);
    const clients = mkClients(3, sched);
    const roster = [1, 2, 3];
    // member 3 is offline for both the voided round and its successor
    let subs = new Map<number, bigint[]>();
    subs.set(1, proto.buildRoundVector(clients[0], proto.idleIntent()));
    subs.set(2, proto.buildRoundVector(clients[1], proto.idleIntent()));
    const digests = closeRound(srv, roster, subs, { offline: [3] });
    proto.processRoundDigest(clients[0], digests.get(1)!);
    proto.processRoundDigest(clients[1], digests.get(2)!);

    for (const i of roster) srv.balances.set(i, 0n);
    srv.pendingEvents.push("rollback:0");
    subs = new Map();
    subs.set(1, proto.buildRoundVector(clients[0], proto.idleIntent()));
    subs.set(2, proto.buildRoundVector(clients[1], proto.idleIntent()));
    const replay = closeRound(srv, roster, subs, { offline: [3] });

    // member 3 sees only round 1; the rollback event burns round 0 for it
    const out = proto.processRoundDigest(clients[2], replay.get(3)!);
    expect(out.kind).toBe("idle");
    expect(clients[2].nextRound).toBe(2);
    expect(clients[2].roundMeta.get(0)!.kind).toBe("burned");
  });

  it("reverts an accepted charge round when a peer's report rolls it back", () => {
    const sched = powersSchedule([2]);
    const srv = toyServer(3, sched);
    const clients = mkClients(3, sched);
    const roster = [1, 2, 3];
    const subs = new Map<number, bigint[]>();
    subs.set(1, proto.buildRoundVector(clients[0], proto.chargeIntent(2)));
    subs.set(2, proto.buildRoundVector(clients[1], proto.idleIntent()));
    subs.set(3, proto.buildRoundVector(clients[2], proto.idleIntent()));
    const digests = closeRound(srv, roster, subs);
    proto.processRoundDigest(clients[0], digests.get(1)!);
    proto.processRoundDigest(clients[1], digests.get(2)!);
    expect(clients[0].balanceCents).toBe(-2);
    expect(clients[1].balanceCents).toBe(2);
    // member 3's copy was corrupted; it reported, the server rolled back
    for (const i of roster) srv.balances.set(i, 0n);
    srv.pendingEvents.push("rollback:0");
    const flagged = { ...digests.get(3)!, rolledBack: true };
    proto.processRoundDigest(clients[2], flagged);
    const subs1 = new Map<number, bigint[]>();
    for (const cl of clients) subs1.set(cl.index, proto.buildRoundVector(cl, proto.idleIntent()));
    const replay = closeRound(srv, roster, subs1);
    for (const cl of [clients[0], clients[1]]) {
      expect(proto.processRoundDigest(cl, replay.get(cl.index)!).kind).toBe("idle");
      expect(cl.balanceCents).toBe(0);
      expect(cl.roundMeta.get(0)!.kind).toBe("burned");
    }
  });
});

describe("membership", () => {
  it("activates a join at the next round and bootstraps from a sponsor", () => {
    const sched = unitSchedule();
    const srv = toyServer(2, sched);
    const clients = mkClients(2, sched);
    playRound(srv, clients, new Map([[1, proto.chargeIntent(2)]]));

    // the server admits member 3; the event rides round 1
    srv.balances.set(3, 0n);
    srv.pendingEvents.push("join:3");
    playRound(srv, clients, new Map());
    expect(proto.roster(clients[0])).toEqual([1, 2, 3]);

    const late = proto.joinClient(new GroupSecret(KEY), 3, "semihonest", sched, clients[0]);
    expect(late.nextRound).toBe(2);
    const all = [...clients, late];
    playRound(srv, all, new Map([[3, proto.chargeIntent(1)]]));
    expect(late.balanceCents).toBe(-1);
    expect(clients[0].balanceCents).toBe(0); // -1 charged out in round 0, +1 incoming
    for (const res of [proto.settle(late, srv.nextRound, new Map(srv.balances))]) {
      expect(res.get(1)).toBe(0);
      expect(res.get(2)).toBe(1);
      expect(res.get(3)).toBe(-1);
    }
  });

  it("drops a leaver from the roster at the event boundary", () => {
    const sched = unitSchedule();
    const srv = toyServer(3, sched);
    const clients = mkClients(3, sched);
    playRound(srv, clients, new Map());
    srv.pendingEvents.push("leave:3");
    playRound(srv, clients, new Map());
    srv.balances.delete(3);
    expect(proto.roster(clients[0])).toEqual([1, 2]);
    playRound(srv, [clients[0], clients[1]], new Map([[1, proto.chargeIntent(2)]]));
    expect(clients[0].balanceCents).toBe(-1);
    for (const res of [proto.settle(clients[0], srv.nextRound, new Map(srv.balances))]) {
      expect([...res.keys()]).toEqual([1, 2]);
    }
  });
});

describe("offline catch-up", () => {
  it("replays substituted rounds from the log and reconverges", () => {
    const sched = powersSchedule([4]);
    const srv = toyServer(3, sched);
    const clients = mkClients(3, sched);
    const online = [clients[0], clients[1]];

    playRound(srv, online, new Map([[1, proto.chargeIntent(3)]]), { offline: [3] });
    playRound(srv, online, new Map([[2, proto.chargeIntent(1)]]), { offline: [3] });
    expect(clients[2].nextRound).toBe(0);

    const outs = proto.catchUp(
      clients[2],
      srv.log.map((byMember) => byMember.get(3)!),
    );
    expect(outs.map((o) => o.kind)).toEqual(["charged", "charged"]);
    expect(clients[2].nextRound).toBe(2);
    expect(clients[2].balanceCents).toBe(4); // the charge from member 1 landed
    for (const res of settleAll(srv, clients)) {
      expect(res.get(1)).toBe(-4 + 4);
      expect(res.get(2)).toBe(-4);
      expect(res.get(3)).toBe(4);
    }
  });
});

describe("packed rounds", () => {
  it("charges several lanes at once and settles", () => {
    const sched = packedSchedule(2);
    const srv = toyServer(4, sched);
    const clients = mkClients(4, sched);

    // window 0 lanes 1..4 carry 2+4+8+16 = 30 cents
    const lanes = new Map([
      [1, 2],
      [2, 2],
      [3, 2],
      [4, 2],
    ]);
    const outs = playRound(srv, clients, new Map([[1, proto.chargeLanesIntent(lanes)]]));
    expect(outs.get(1)!.kind).toBe("charged");
    expect(outs.get(1)!.selfDeltaCents).toBe(-30);
    expect(outs.get(2)!.selfDeltaCents).toBe(30);
    expect(outs.get(2)!.charges.map((c) => c.cents)).toEqual([2, 4, 8, 16]);
    expect(outs.get(3)!.selfDeltaCents).toBe(0);
    playRound(srv, clients, new Map());
    for (const res of settleAll(srv, clients)) {
      expect(res.get(1)).toBe(-30);
      expect(res.get(2)).toBe(30);
    }
  });

  it("splits one amount across both windows", () => {
    const sched = packedSchedule(2);
    const srv = toyServer(3, sched);
    const clients = mkClients(3, sched);
    // 2014 = 30 (window 0, lanes 1..4) + 1984 (window 1, lanes 0..4)
    const w0 = new Map([
      [1, 2],
      [2, 2],
      [3, 2],
      [4, 2],
    ]);
    const w1 = new Map([
      [0, 2],
      [1, 2],
      [2, 2],
      [3, 2],
      [4, 2],
    ]);
    playRound(srv, clients, new Map([[1, proto.chargeLanesIntent(w0)]]));
    playRound(srv, clients, new Map([[1, proto.chargeLanesIntent(w1)]]));
    expect(clients[0].balanceCents).toBe(-2014);
    expect(clients[1].balanceCents).toBe(2014);
    for (const res of settleAll(srv, clients)) {
      expect(res.get(1)).toBe(-2014);
      expect(res.get(2)).toBe(2014);
      expect(res.get(3)).toBe(0);
    }
  });

  it("resolves a same-lane collision with window-aligned recharges", () => {
    const sched = packedSchedule(2);
    const srv = toyServer(3, sched);
    const clients = mkClients(3, sched);
    const lane0 = new Map([[0, 3]]);

    const outs0 = playRound(
      srv,
      clients,
      new Map([
        [1, proto.chargeLanesIntent(lane0)],
        [2, proto.chargeLanesIntent(lane0)],
      ]),
    );
    for (const o of outs0.values()) expect(o.kind).toBe("collision");
    expect(outs0.get(3)!.selfDeltaCents).toBe(2); // two lane-0 units of window 0

    const outs1 = playRound(srv, clients, new Map()); // rollback at round 1
    for (const o of outs1.values()) expect(o.kind).toBe("resolution");
    expect(clients.map((c) => c.balanceCents)).toEqual([0, 0, 0]);

    // round 2 is window 0 again: member 1 recharges
    const outs2 = playRound(srv, clients, new Map());
    expect(outs2.get(3)!.charges).toEqual([{ charger: 1, cents: 1, toSelf: true, lane: 0 }]);
    // round 3 is window 1: off-window, the queue stalls
    const outs3 = playRound(srv, clients, new Map());
    expect(outs3.get(3)!.kind).toBe("idle");
    // round 4 is window 0: member 2 recharges
    const outs4 = playRound(srv, clients, new Map());
    expect(outs4.get(3)!.charges).toEqual([{ charger: 2, cents: 1, toSelf: true, lane: 0 }]);
    for (const cl of clients) expect(cl.phase).toBe("normal");
    expect(clients.map((c) => c.balanceCents)).toEqual([-1, -1, 2]);
    for (const res of settleAll(srv, clients)) {
      expect(res.get(3)).toBe(2);
    }
  });
});

describe("settle guards", () => {
  it("rejects a settle vector that skips a member", () => {
    const sched = unitSchedule();
    const srv = toyServer(3, sched);
    const clients = mkClients(3, sched);
    playRound(srv, clients, new Map());
    const partial = new Map(srv.balances);
    partial.delete(3);
    expect(() => proto.settle(clients[0], srv.nextRound, partial)).toThrow(/active roster/);
  });

  it("rejects tampered settle balances", () => {
    const sched = unitSchedule();
    const srv = toyServer(3, sched);
    const clients = mkClients(3, sched);
    playRound(srv, clients, new Map([[1, proto.chargeIntent(2)]]));
    const bad = new Map(srv.balances);
    bad.set(2, ring.add(bad.get(2)!, 1n));
    expect(() => proto.settle(clients[0], srv.nextRound, bad)).toThrow(
      /sum to zero|disagrees/,
    );
  });

  it("produces a masked settle claim that unmasks to the ledger balance", () => {
    const sched = powersSchedule([9]);
    const srv = toyServer(2, sched);
    const clients = mkClients(2, sched);
    playRound(srv, clients, new Map([[1, proto.chargeIntent(2)]]));
    const claim = proto.settlePrepare(clients[0], 1);
    const clean = ring.signed(ring.sub(claim, clients[0].secret.settleMask(1, 1)));
    expect(Number(clean)).toBe(-9);
  });
});
