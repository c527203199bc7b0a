/**
 * Pure projections from a member session to plain display data. Nothing in
 * here talks to the network or touches the DOM, so every view is testable
 * as data in, data out.
 */

import { formatCents } from "./format.js";
import { Transfer, netTransfers } from "./netting.js";
import { AlertEntry, MemberSession, ReviewEntry } from "./session.js";
import * as planner from "../engine/planner.js";
import * as proto from "../engine/protocol.js";
import { Schedule } from "../engine/schedule.js";

export interface MemberRow {
  index: number;
  label: string;
  isSelf: boolean;
  active: boolean;
  joinRound: number;
  leaveRound: number | null;
}

export interface ChargeRow {
  round: number;
  chargerLabel: string;
  amount: string;
  announced: string | null;
  autoAccepted: boolean;
  resolution: ReviewEntry["resolution"];
}

export interface AlertRow {
  round: number;
  kind: AlertEntry["kind"];
  note: string;
  acknowledged: boolean;
}

export interface GroupView {
  groupId: string;
  selfIndex: number;
  scheduleLabel: string;
  announcements: boolean;
  round: number;
  phase: proto.Phase;
  phaseLabel: string;
  settling: boolean;
  balanceCents: number;
  balanceLabel: string;
  members: MemberRow[];
  charges: ChargeRow[];
  pendingCount: number;
  alerts: AlertRow[];
  /** Unacknowledged alerts; the UI must keep these in the user's face. */
  openAlerts: AlertRow[];
  canCharge: boolean;
  canSettle: boolean;
  canLeave: boolean;
}

export function memberLabel(index: number, selfIndex: number): string {
  return index === selfIndex ? `member ${index} (you)` : `member ${index}`;
}

export function scheduleLabel(sched: Schedule): string {
  if (sched.kind === "unit") return "unit (1¢ per round)";
  if (sched.kind === "cycle") return `cycle [${sched.cycle.join(", ")}]`;
  return `packed ×${sched.windows} window${sched.windows === 1 ? "" : "s"}`;
}

export function balanceLabel(cents: number): string {
  if (cents > 0) return `you owe ${formatCents(cents)}`;
  if (cents < 0) return `you are owed ${formatCents(-cents)}`;
  return "settled up";
}

const PHASE_LABELS: Record<proto.Phase, string> = {
  normal: "open",
  rollback: "resolving a collision",
  recharge: "replaying collided charges",
};

export function groupView(session: MemberSession): GroupView {
  const st = session.state;
  const members: MemberRow[] = [...st.members.entries()]
    .sort((a, b) => a[0] - b[0])
    .map(([index, view]) => ({
      index,
      label: memberLabel(index, st.index),
      isSelf: index === st.index,
      active: proto.memberActiveAt(view, st.nextRound),
      joinRound: view.joinRound,
      leaveRound: view.leaveRound,
    }));
  const charges: ChargeRow[] = session.review.map((entry) => ({
    round: entry.round,
    chargerLabel: entry.charger === null ? "unknown" : memberLabel(entry.charger, st.index),
    amount: formatCents(entry.cents),
    announced: entry.announcedTotal === null ? null : formatCents(entry.announcedTotal),
    autoAccepted: entry.autoAccepted,
    resolution: entry.resolution,
  }));
  const alerts: AlertRow[] = session.alerts.map((a) => ({ ...a }));
  const settled = st.settling;
  const inRes = proto.inResolution(st);
  return {
    groupId: session.groupId,
    selfIndex: st.index,
    scheduleLabel: scheduleLabel(st.schedule),
    announcements: session.announcements,
    round: st.nextRound,
    phase: st.phase,
    phaseLabel: PHASE_LABELS[st.phase],
    settling: settled,
    balanceCents: st.balanceCents,
    balanceLabel: balanceLabel(st.balanceCents),
    members,
    charges,
    pendingCount: charges.filter((c) => c.resolution === "pending").length,
    alerts,
    openAlerts: alerts.filter((a) => !a.acknowledged),
    canCharge: !settled && !inRes,
    canSettle: !settled && !inRes,
    canLeave: !settled && !inRes && st.balanceCents === 0,
  };
}

// ---------------------------------------------------------------------------
// charge form preview

export type ChargePreview =
  | { ok: true; rounds: number; label: string }
  | { ok: false; reason: string };

/** "…→ N rounds" hint under the amount box, before anything is sent. */
export function chargePreview(sched: Schedule, cents: number): ChargePreview {
  try {
    const rounds = planner.roundsForAmount(cents, sched);
    return {
      ok: true,
      rounds,
      label: `${formatCents(cents)} → ${rounds} round${rounds === 1 ? "" : "s"}`,
    };
  } catch (err) {
    if (err instanceof planner.PlanError) return { ok: false, reason: err.message };
    throw err;
  }
}

// ---------------------------------------------------------------------------
// settlement

export interface SettlementRow {
  index: number;
  label: string;
  netLabel: string;
  cents: number;
}

export interface TransferRow {
  fromLabel: string;
  toLabel: string;
  amount: string;
}

export interface SettlementView {
  rows: SettlementRow[];
  transfers: TransferRow[];
  /** Marks this member's own required action, if any. */
  selfAction: string | null;
}

function netLabel(cents: number): string {
  if (cents > 0) return `owes ${formatCents(cents)}`;
  if (cents < 0) return `receives ${formatCents(-cents)}`;
  return "even";
}

/** Who-pays-whom view of settled balances (positive cents = owes). */
export function settlementView(selfIndex: number, balances: Map<number, number>): SettlementView {
  const rows: SettlementRow[] = [...balances.entries()]
    .sort((a, b) => a[0] - b[0])
    .map(([index, cents]) => ({
      index,
      label: memberLabel(index, selfIndex),
      netLabel: netLabel(cents),
      cents,
    }));
  const net: Transfer[] = netTransfers(balances);
  const transfers: TransferRow[] = net.map((t) => ({
    fromLabel: memberLabel(t.from, selfIndex),
    toLabel: memberLabel(t.to, selfIndex),
    amount: formatCents(t.cents),
  }));
  const actions: string[] = [];
  for (const t of net) {
    if (t.from === selfIndex) actions.push(`pay member ${t.to} ${formatCents(t.cents)}`);
    else if (t.to === selfIndex) actions.push(`collect ${formatCents(t.cents)} from member ${t.from}`);
  }
  return { rows, transfers, selfAction: actions.length ? actions.join("; ") : null };
}
