/**
 * Public round-value schedules, agreed by every member and the server at
 * setup. The value of a round is public; the amounts stay hidden because
 * participation is hidden, not the per-round quantum.
 */

import * as packing from "./packing.js";

export const DEFAULT_CYCLE: number[] = Array.from({ length: 17 }, (_, k) => 1 << k);

export const PACKED_WINDOWS = 3;

export type ScheduleKind = "unit" | "cycle" | "packed";

export interface ScheduleJson {
  kind?: string;
  cycle?: number[];
  windows?: number;
}

export class Schedule {
  readonly kind: ScheduleKind;
  readonly cycle: number[];
  readonly windows: number;

  constructor(kind: ScheduleKind, cycle: number[] = [1], windows: number = PACKED_WINDOWS) {
    if (kind === "cycle" && (cycle.length === 0 || cycle.some((v) => v < 1))) {
      throw new Error("cycle values must be positive");
    }
    if (kind === "packed" && (windows < 1 || windows > 4)) {
      throw new Error("packed window count out of range");
    }
    this.kind = kind;
    this.cycle = [...cycle];
    this.windows = windows;
  }

  /** Whole-word multiplier the server applies in round m. */
  roundValue(m: number): number {
    if (this.kind === "cycle") return this.cycle[m % this.cycle.length];
    return 1;
  }

  window(m: number): number {
    return m % this.windows;
  }

  /** Packed rounds: public cent value carried by each of the six lanes. */
  laneValues(m: number): number[] {
    if (this.kind !== "packed") throw new Error("lane values only defined for packed schedules");
    const t = this.window(m);
    return Array.from({ length: packing.SLOTS }, (_, k) => 2 ** (packing.SLOTS * t + k));
  }

  /** The idle cover word of a packed round: every lane at its value. */
  packedUnit(m: number): bigint {
    const vals = this.laneValues(m);
    let word = 0n;
    vals.forEach((v, k) => {
      word |= BigInt(v) << BigInt(packing.SLOT_BITS * k);
    });
    return word;
  }

  maxValue(): number {
    if (this.kind === "cycle") return Math.max(...this.cycle);
    if (this.kind === "packed") return 2 ** (packing.SLOTS * this.windows - 1);
    return 1;
  }

  toJson(): { kind: string; cycle: number[]; windows: number } {
    return { kind: this.kind, cycle: [...this.cycle], windows: this.windows };
  }

  static fromJson(data: ScheduleJson): Schedule {
    const kind = (data.kind ?? "unit") as ScheduleKind;
    if (kind !== "unit" && kind !== "cycle" && kind !== "packed") {
      throw new Error(`unknown schedule kind ${JSON.stringify(data.kind)}`);
    }
    return new Schedule(kind, data.cycle ?? [1], data.windows ?? PACKED_WINDOWS);
  }
}

export function unitSchedule(): Schedule {
  return new Schedule("unit");
}

export function powersSchedule(cycle: number[] = DEFAULT_CYCLE): Schedule {
  return new Schedule("cycle", cycle);
}

export function packedSchedule(windows: number = PACKED_WINDOWS): Schedule {
  return new Schedule("packed", [1], windows);
}
