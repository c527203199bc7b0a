/**
 * Serialized command channel around a MemberSession.
 *
 * A session mutates shared protocol state, so its operations must never
 * interleave. The port accepts typed requests, runs them one at a time in
 * arrival order, and emits a fresh view snapshot after every operation.
 * The UI layer only ever posts requests and redraws on snapshots; it never
 * touches ring words or mask arithmetic. The request/reply types are plain
 * data, so the same protocol can later move across a real worker boundary
 * unchanged.
 *
 * An online member must submit a cover vector every round even when idle —
 * silence would leak that nothing happened and stall full-participation
 * round closing. `startCover` keeps that heartbeat going in the background
 * until the group settles or the member leaves.
 */

import { InviteBundle, MemberSession, SdkError } from "./session.js";
import { GroupView, groupView } from "./viewmodel.js";
import * as proto from "../engine/protocol.js";

export type PortRequest =
  | { op: "sync" }
  | { op: "cover" }
  | { op: "charge"; target: number; cents: number; announceTotal?: number | null }
  | { op: "split"; totalCents: number }
  | { op: "accept"; round: number }
  | { op: "reject"; round: number }
  | { op: "ack-alert"; round: number }
  | { op: "invite" }
  | { op: "dispute"; round: number; accused?: number | null }
  | { op: "settle" }
  | { op: "leave" };

export type PortReply =
  | { op: "sync" | "cover"; rounds: number }
  | { op: "charge" | "split" | "reject"; rounds: number }
  | { op: "accept" | "ack-alert" }
  | { op: "invite"; bundle: InviteBundle }
  | { op: "dispute"; verdicts: [number, string][] }
  | { op: "settle"; balances: [number, number][] }
  | { op: "leave"; leaveRound: number };

export type PortListener = (view: GroupView) => void;

export class EnginePort {
  private queue: Promise<unknown> = Promise.resolve();
  private listeners: PortListener[] = [];
  private covering = false;
  private left = false;
  lastError: string | null = null;

  constructor(readonly session: MemberSession) {}

  onChange(listener: PortListener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  view(): GroupView {
    return groupView(this.session);
  }

  private emit(): void {
    const view = this.view();
    for (const l of this.listeners) l(view);
  }

  /** Run one request after all previously posted ones. */
  post(req: PortRequest): Promise<PortReply> {
    const run = this.queue.then(() => this.execute(req));
    // keep the chain alive whether or not this request fails
    this.queue = run.catch(() => undefined);
    return run.then(
      (reply) => {
        this.lastError = null;
        this.emit();
        return reply;
      },
      (err: unknown) => {
        this.lastError = err instanceof Error ? err.message : String(err);
        this.emit();
        throw err;
      },
    );
  }

  private async execute(req: PortRequest): Promise<PortReply> {
    const s = this.session;
    switch (req.op) {
      case "sync":
        return { op: "sync", rounds: (await s.catchUp()).length };
      case "cover": {
        const before = s.state.nextRound;
        await s.step();
        return { op: "cover", rounds: s.state.nextRound - before };
      }
      case "charge": {
        const outs = await s.charge(req.target, req.cents, req.announceTotal ?? null);
        return { op: "charge", rounds: outs.length };
      }
      case "split": {
        const got = await s.splitBill(req.totalCents);
        return { op: "split", rounds: got.outcomes.length };
      }
      case "accept":
        s.accept(req.round);
        return { op: "accept" };
      case "reject":
        return { op: "reject", rounds: (await s.reject(req.round)).length };
      case "ack-alert":
        s.acknowledgeAlert(req.round);
        return { op: "ack-alert" };
      case "invite":
        return { op: "invite", bundle: await s.invite() };
      case "dispute": {
        const verdicts = await s.dispute(req.round, req.accused ?? null);
        return { op: "dispute", verdicts: [...verdicts.entries()] };
      }
      case "settle":
        return { op: "settle", balances: [...(await s.settle()).entries()] };
      case "leave": {
        const leaveRound = await s.leave();
        this.left = true;
        return { op: "leave", leaveRound };
      }
    }
  }

  /** Keep submitting cover vectors; stops itself on settle or leave. */
  startCover(): void {
    if (this.covering) return;
    this.covering = true;
    void this.coverLoop();
  }

  stopCover(): void {
    this.covering = false;
  }

  private async coverLoop(): Promise<void> {
    while (this.covering) {
      if (this.left || this.session.state.settling) {
        this.covering = false;
        return;
      }
      const self = this.session.state.members.get(this.session.state.index);
      if (self && !proto.memberActiveAt(self, this.session.state.nextRound)) {
        this.covering = false;
        return;
      }
      try {
        await this.post({ op: "cover" });
      } catch (err) {
        if (err instanceof SdkError && /settled/.test(err.message)) {
          this.covering = false;
          return;
        }
        // transient server trouble: breathe, then keep covering
        await new Promise((r) => setTimeout(r, this.session.options.pollIntervalMs * 4));
      }
    }
  }
}
