/**
 * Turning a cent amount into a sequence of round participations.
 *
 * A transfer never states its amount; it is the sum of the public round
 * values of the rounds the payer participates in. The charge-form preview
 * ("$20.14 → 2 rounds") is the plan's round span.
 */

import * as packing from "./packing.js";
import { Schedule } from "./schedule.js";

export class PlanError extends Error {}

/** One participating round: its position in the schedule and the payload. */
export interface PlanStep {
  cyclePos: number;
  value: number;
  lanes: number[];
}

export interface RoundPlan {
  amountCents: number;
  target: number;
  steps: PlanStep[];
  /** Span from a cycle boundary, idle waits included. */
  roundsToComplete: number;
  /** Rounds actually carrying a charge. */
  activeRounds: number;
}

export function planTransfer(amountCents: number, target: number, sched: Schedule): RoundPlan {
  if (!Number.isInteger(amountCents) || amountCents <= 0) {
    throw new PlanError("amount must be positive cents");
  }
  if (sched.kind === "unit") {
    const steps = Array.from({ length: amountCents }, () => ({ cyclePos: 0, value: 1, lanes: [] }));
    return { amountCents, target, steps, roundsToComplete: amountCents, activeRounds: amountCents };
  }
  if (sched.kind === "cycle") return planCycle(amountCents, target, sched);
  return planPacked(amountCents, target, sched);
}

function planCycle(amount: number, target: number, sched: Schedule): RoundPlan {
  const period = sched.cycle.length;
  const counts = new Array<number>(period).fill(0);
  let remaining = amount;
  const order = [...counts.keys()].sort((a, b) => sched.cycle[b] - sched.cycle[a]);
  for (const pos of order) {
    const v = sched.cycle[pos];
    counts[pos] += Math.floor(remaining / v);
    remaining %= v;
  }
  if (remaining) throw new PlanError(`schedule cannot express ${amount} cents`);
  const steps: PlanStep[] = [];
  let pos = 0;
  let guard = 0;
  while (counts.some((c) => c > 0)) {
    if (counts[pos % period]) {
      counts[pos % period] -= 1;
      steps.push({ cyclePos: pos % period, value: sched.cycle[pos % period], lanes: [] });
    }
    pos += 1;
    guard += 1;
    if (guard > period * (amount + 1)) throw new PlanError("plan does not converge");
  }
  return { amountCents: amount, target, steps, roundsToComplete: pos, activeRounds: steps.length };
}

function planPacked(amount: number, target: number, sched: Schedule): RoundPlan {
  const top = packing.SLOTS * sched.windows;
  if (amount >= 2 ** top) throw new PlanError(`amount ${amount} exceeds packed window capacity`);
  const byWindow = new Map<number, number[]>();
  for (let b = 0; 1 << b <= amount; b++) {
    if ((amount >> b) & 1) {
      const t = Math.floor(b / packing.SLOTS);
      const lane = b % packing.SLOTS;
      if (!byWindow.has(t)) byWindow.set(t, []);
      byWindow.get(t)!.push(lane);
    }
  }
  const steps: PlanStep[] = [...byWindow.entries()]
    .sort((a, b) => a[0] - b[0])
    .map(([t, lanes]) => ({
      cyclePos: t,
      value: lanes.reduce((acc, k) => acc + 2 ** (packing.SLOTS * t + k), 0),
      lanes: [...lanes],
    }));
  const span = byWindow.size ? Math.max(...byWindow.keys()) + 1 : 0;
  return { amountCents: amount, target, steps, roundsToComplete: span, activeRounds: steps.length };
}

/** Round span of a single transfer under a schedule (the preview number). */
export function roundsForAmount(amountCents: number, sched: Schedule): number {
  return planTransfer(amountCents, 1, sched).roundsToComplete;
}
