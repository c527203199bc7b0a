/**
 * Pseudorandom masks shared by the group, opaque to the server.
 *
 * Each mask is one AES-128 block under the group key, read as a big-endian
 * ring word. The PRF input block layout is fixed:
 *
 *     tag(1) | round(8, BE) | i(3, BE) | j(3, BE) | zero pad(1)
 *
 * Domain tags keep round masks, the malicious-mode constants, settle masks
 * and announcement masks disjoint. Everything is deterministic in
 * (key, domain, round, i, j), so any round's mask sheet can be recomputed on
 * demand for catch-up, tracing or audits.
 */

import { Aes128 } from "./aes.js";
import * as ring from "./ring.js";

export const KEY_BYTES = 16;

export const INDEX_LIMIT = 1 << 24;
export const ROUND_LIMIT = 2n ** 64n;

export enum MaskDomain {
  S = 0x00,
  UNIT = 0x01,
  ROUND = 0x02,
  SETTLE = 0x03,
  ANNOUNCE = 0x04,
}

export function encodeInput(domain: MaskDomain, m: number, i: number, j: number): Uint8Array {
  if (!Number.isInteger(m) || m < 0 || BigInt(m) >= ROUND_LIMIT) {
    throw new Error(`round ${m} out of range`);
  }
  if (i < 0 || i >= INDEX_LIMIT || j < 0 || j >= INDEX_LIMIT) {
    throw new Error(`index pair (${i}, ${j}) out of range`);
  }
  const out = new Uint8Array(16);
  out[0] = domain;
  // rounds are plain numbers well below 2^53; split into high/low 32 bits
  const hi = Math.floor(m / 0x1_0000_0000);
  const lo = m % 0x1_0000_0000;
  out[1] = (hi >>> 24) & 0xff;
  out[2] = (hi >>> 16) & 0xff;
  out[3] = (hi >>> 8) & 0xff;
  out[4] = hi & 0xff;
  out[5] = (lo >>> 24) & 0xff;
  out[6] = (lo >>> 16) & 0xff;
  out[7] = (lo >>> 8) & 0xff;
  out[8] = lo & 0xff;
  out[9] = (i >>> 16) & 0xff;
  out[10] = (i >>> 8) & 0xff;
  out[11] = i & 0xff;
  out[12] = (j >>> 16) & 0xff;
  out[13] = (j >>> 8) & 0xff;
  out[14] = j & 0xff;
  out[15] = 0;
  return out;
}

/** All pairwise masks of one round, with the sums the checks consume. */
export interface RoundMaskSheet {
  roundNo: number;
  submitters: number[];
  columns: number[];
  /** rows.get(i)!.get(j) is r_{m,i,j}: what submitter i adds to member j's cell. */
  rows: Map<number, Map<number, bigint>>;
  rowSums: Map<number, bigint>;
  colSums: Map<number, bigint>;
  total: bigint;
}

export function sheetDiag(sheet: RoundMaskSheet, i: number): bigint {
  const row = sheet.rows.get(i);
  const v = row?.get(i);
  if (v === undefined) throw new Error(`no diagonal mask for member ${i}`);
  return v;
}

/** The shared symmetric key plus the two derived malicious-mode constants. */
export class GroupSecret {
  readonly key: Uint8Array;
  readonly s: bigint;
  readonly u: bigint;
  private readonly cipher: Aes128;

  constructor(key: Uint8Array) {
    if (key.length !== KEY_BYTES) throw new Error(`group key must be ${KEY_BYTES} bytes`);
    this.key = new Uint8Array(key);
    this.cipher = new Aes128(key);
    this.s = this.block(encodeInput(MaskDomain.S, 0, 0, 0));
    this.u = this.block(encodeInput(MaskDomain.UNIT, 0, 0, 0));
  }

  private block(input: Uint8Array): bigint {
    return ring.fromBytes(this.cipher.encryptBlock(input));
  }

  deriveMask(domain: MaskDomain, m: number, i: number, j: number): bigint {
    return this.block(encodeInput(domain, m, i, j));
  }

  /** Masks submitter i spreads over the active columns in round m. */
  roundMaskRow(m: number, i: number, columns: number[]): Map<number, bigint> {
    const row = new Map<number, bigint>();
    for (const j of columns) row.set(j, this.deriveMask(MaskDomain.ROUND, m, i, j));
    return row;
  }

  roundMaskSheet(m: number, submitters: Iterable<number>, columns: Iterable<number>): RoundMaskSheet {
    const subs = [...submitters].sort((a, b) => a - b);
    const cols = [...columns].sort((a, b) => a - b);
    const rows = new Map<number, Map<number, bigint>>();
    const rowSums = new Map<number, bigint>();
    const colAcc = new Map<number, bigint>(cols.map((j) => [j, 0n]));
    let total = 0n;
    for (const i of subs) {
      const row = new Map<number, bigint>();
      let acc = 0n;
      for (const j of cols) {
        const r = this.deriveMask(MaskDomain.ROUND, m, i, j);
        row.set(j, r);
        acc += r;
        colAcc.set(j, colAcc.get(j)! + r);
      }
      rows.set(i, row);
      rowSums.set(i, acc & ring.MASK);
    }
    const colSums = new Map<number, bigint>();
    for (const [j, v] of colAcc) {
      const w = v & ring.MASK;
      colSums.set(j, w);
      total += w;
    }
    return { roundNo: m, submitters: subs, columns: cols, rows, rowSums, colSums, total: total & ring.MASK };
  }

  settleMask(m: number, i: number): bigint {
    return this.deriveMask(MaskDomain.SETTLE, m, i, 0);
  }

  announceMask(m: number, i: number): bigint {
    return this.deriveMask(MaskDomain.ANNOUNCE, m, i, 0);
  }
}

export function maskValue(v: bigint, r: bigint): bigint {
  return ring.add(v, r);
}

export function unmaskValue(v: bigint, r: bigint): bigint {
  return ring.sub(v, r);
}
