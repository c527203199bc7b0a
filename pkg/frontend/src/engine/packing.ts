/**
 * Slot codec: six 21-bit lanes inside one ring word.
 *
 * Slot k occupies bits [21k, 21k + 21); the top two bits of the word stay
 * clear. Packed rounds move up to six charge bits per round this way. The
 * signed decoder recovers per-lane values after subtractions by propagating
 * borrows off the centered representative.
 */

import * as ring from "./ring.js";

export const SLOTS = 6;
export const SLOT_BITS = 21;
export const SLOT_MOD = 1n << BigInt(SLOT_BITS);
export const SLOT_MASK = SLOT_MOD - 1n;

/** Signed decode is unambiguous while every lane stays in (-2^20, 2^20). */
export const SIGNED_LANE_BOUND = 1n << BigInt(SLOT_BITS - 1);

export class SlotOverflowError extends Error {}

export function pack(values: number[]): bigint {
  if (values.length !== SLOTS) {
    throw new SlotOverflowError(`expected ${SLOTS} slot values, got ${values.length}`);
  }
  let word = 0n;
  values.forEach((v, k) => {
    const b = BigInt(v);
    if (b < 0n || b >= SLOT_MOD) {
      throw new SlotOverflowError(`slot ${k} value ${v} outside [0, 2^${SLOT_BITS})`);
    }
    word |= b << BigInt(SLOT_BITS * k);
  });
  return word;
}

export function unpack(word: bigint): number[] {
  if (word < 0n || word >= 1n << BigInt(SLOT_BITS * SLOTS)) {
    throw new SlotOverflowError("word has bits above the top slot");
  }
  const out: number[] = [];
  for (let k = 0; k < SLOTS; k++) {
    out.push(Number((word >> BigInt(SLOT_BITS * k)) & SLOT_MASK));
  }
  return out;
}

/**
 * Decode a ring word as six signed lanes, borrowing across lanes.
 *
 * Works on aggregates built from packed additions and subtractions provided
 * every true lane value lies in (-2^20, 2^20); outside that the decode is
 * ambiguous and this throws.
 */
export function unpackSigned(word: bigint): number[] {
  let x = ring.signed(word);
  const lanes: number[] = [];
  for (let k = 0; k < SLOTS; k++) {
    let lane = x & SLOT_MASK;
    if (lane >= SIGNED_LANE_BOUND) lane -= SLOT_MOD;
    lanes.push(Number(lane));
    x = (x - lane) >> BigInt(SLOT_BITS);
  }
  if (x !== 0n) throw new SlotOverflowError("residue above top slot; lane bound exceeded");
  return lanes;
}
