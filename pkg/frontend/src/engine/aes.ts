/**
 * AES-128 single-block encryption, the group's only cipher.
 *
 * Masks are one AES block each, so encrypt-only with a 16-byte key covers the
 * whole protocol; no modes, no decryption. The S-box is generated from the
 * field inverse plus affine map rather than pasted as a table, and the output
 * is pinned against the published FIPS-197 / SP 800-38A example blocks in the
 * tests.
 */

const SBOX = new Uint8Array(256);
{
  // multiplicative inverses in GF(2^8) via exp/log tables over generator 3
  const exp = new Uint8Array(256);
  const log = new Uint8Array(256);
  let x = 1;
  for (let i = 0; i < 255; i++) {
    exp[i] = x;
    log[x] = i;
    x ^= (x << 1) ^ (x & 0x80 ? 0x11b : 0);
    x &= 0xff;
  }
  exp[255] = exp[0]; // exponents are mod 255; log(1) = 0 hits this slot
  for (let i = 0; i < 256; i++) {
    const inv = i === 0 ? 0 : exp[255 - log[i]];
    let s = inv;
    let r = inv;
    for (let k = 0; k < 4; k++) {
      r = ((r << 1) | (r >> 7)) & 0xff;
      s ^= r;
    }
    SBOX[i] = s ^ 0x63;
  }
}

const RCON = new Uint8Array([0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1b, 0x36]);

function xtime(b: number): number {
  return ((b << 1) ^ (b & 0x80 ? 0x1b : 0)) & 0xff;
}

export class Aes128 {
  /** Expanded key: 11 round keys of 16 bytes. */
  private readonly rk: Uint8Array;

  constructor(key: Uint8Array) {
    if (key.length !== 16) throw new Error(`AES-128 key must be 16 bytes, got ${key.length}`);
    const rk = new Uint8Array(176);
    rk.set(key);
    for (let i = 16; i < 176; i += 4) {
      let t0 = rk[i - 4];
      let t1 = rk[i - 3];
      let t2 = rk[i - 2];
      let t3 = rk[i - 1];
      if (i % 16 === 0) {
        const rot = t0;
        t0 = SBOX[t1] ^ RCON[i / 16 - 1];
        t1 = SBOX[t2];
        t2 = SBOX[t3];
        t3 = SBOX[rot];
      }
      rk[i] = rk[i - 16] ^ t0;
      rk[i + 1] = rk[i - 15] ^ t1;
      rk[i + 2] = rk[i - 14] ^ t2;
      rk[i + 3] = rk[i - 13] ^ t3;
    }
    this.rk = rk;
  }

  /** Encrypt one 16-byte block into a fresh array. */
  encryptBlock(block: Uint8Array): Uint8Array {
    if (block.length !== 16) throw new Error(`AES block must be 16 bytes, got ${block.length}`);
    const s = new Uint8Array(block);
    const rk = this.rk;
    for (let i = 0; i < 16; i++) s[i] ^= rk[i];
    for (let round = 1; round <= 10; round++) {
      // SubBytes
      for (let i = 0; i < 16; i++) s[i] = SBOX[s[i]];
      // ShiftRows (state is column-major: byte r of column c sits at 4c + r)
      let t = s[1];
      s[1] = s[5]; s[5] = s[9]; s[9] = s[13]; s[13] = t;
      t = s[2]; s[2] = s[10]; s[10] = t;
      t = s[6]; s[6] = s[14]; s[14] = t;
      t = s[15];
      s[15] = s[11]; s[11] = s[7]; s[7] = s[3]; s[3] = t;
      // MixColumns (skipped in the final round)
      if (round < 10) {
        for (let c = 0; c < 16; c += 4) {
          const a0 = s[c], a1 = s[c + 1], a2 = s[c + 2], a3 = s[c + 3];
          const all = a0 ^ a1 ^ a2 ^ a3;
          s[c] ^= all ^ xtime(a0 ^ a1);
          s[c + 1] ^= all ^ xtime(a1 ^ a2);
          s[c + 2] ^= all ^ xtime(a2 ^ a3);
          s[c + 3] ^= all ^ xtime(a3 ^ a0);
        }
      }
      // AddRoundKey
      const off = 16 * round;
      for (let i = 0; i < 16; i++) s[i] ^= rk[off + i];
    }
    return s;
  }
}
