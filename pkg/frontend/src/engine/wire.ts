/**
 * Byte-exact wire encodings and the base64url envelope helpers.
 *
 * A submission is the member's N ring words back to back (16*N bytes); a
 * digest core is v' | c | b_entry | status, 52 bytes. JSON carries these as
 * unpadded base64url strings.
 */

import { b64d, b64e } from "./bytes.js";
import * as ring from "./ring.js";

export const DIGEST_BYTES = 3 * ring.WORD_BYTES + 4;

export class WireError extends Error {}

export function encodeSubmission(vec: bigint[]): Uint8Array {
  const out = new Uint8Array(vec.length * ring.WORD_BYTES);
  vec.forEach((w, k) => out.set(ring.toBytes(w), k * ring.WORD_BYTES));
  return out;
}

export function decodeSubmission(data: Uint8Array, n: number): bigint[] {
  if (data.length !== ring.WORD_BYTES * n) {
    throw new WireError(
      `submission must be ${ring.WORD_BYTES * n} bytes for ${n} members, got ${data.length}`,
    );
  }
  const out: bigint[] = [];
  for (let k = 0; k < n; k++) {
    out.push(ring.fromBytes(data.subarray(k * ring.WORD_BYTES, (k + 1) * ring.WORD_BYTES)));
  }
  return out;
}

export interface DigestCore {
  vPrime: bigint;
  c: bigint;
  bEntry: bigint;
  status: number;
}

export function decodeDigestCore(data: Uint8Array): DigestCore {
  if (data.length !== DIGEST_BYTES) {
    throw new WireError(`digest core must be ${DIGEST_BYTES} bytes, got ${data.length}`);
  }
  const status =
    (data[48] << 24) | (data[49] << 16) | (data[50] << 8) | data[51];
  return {
    vPrime: ring.fromBytes(data.subarray(0, 16)),
    c: ring.fromBytes(data.subarray(16, 32)),
    bEntry: ring.fromBytes(data.subarray(32, 48)),
    status: status >>> 0,
  };
}

export function encodeWord(w: bigint): string {
  return b64e(ring.toBytes(w));
}

export function decodeWord(text: string): bigint {
  const data = b64d(text);
  if (data.length !== ring.WORD_BYTES) {
    throw new WireError(`ring word must be ${ring.WORD_BYTES} bytes, got ${data.length}`);
  }
  return ring.fromBytes(data);
}

export { b64d, b64e };
