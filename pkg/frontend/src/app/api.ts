/**
 * Typed fetch client for the wire service.
 *
 * Everything binary rides as unpadded base64url: submission vectors, digest
 * cores, individual ring words. Authentication is one bearer token per
 * member, issued at join time. The fetch implementation is injectable so
 * tests can intercept and inspect every request without a network stack.
 */

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export interface ScheduleJson {
  kind: string;
  cycle: number[];
  windows: number;
}

export interface GroupConfigJson {
  n: number;
  mode: string;
  schedule: ScheduleJson;
  round_period_ms: number;
  offline_substitution: boolean;
  announcements: boolean;
  on_demand_rounds: boolean;
}

export interface JoinResponse {
  index: number;
  token: string;
  a: string;
  join_round: number;
  next_round: number;
  config: GroupConfigJson;
}

export interface DigestWire {
  round: number;
  digest: string;
  status: number;
  value: number;
  offline: number[];
  events: string[];
  rolled_back: boolean;
  announce_sum: string | null;
}

export interface GroupInfo {
  group_id: string;
  config: GroupConfigJson;
  next_round: number;
  members: Record<string, { join_round: number; leave_round: number | null }>;
  settling: boolean;
  a: string;
}

export class ApiError extends Error {
  constructor(
    readonly method: string,
    readonly path: string,
    readonly status: number,
    readonly detail: string,
  ) {
    super(`${method} ${path}: ${status} ${detail}`);
  }
}

/** The submission raced a round boundary; resync and retry. */
export function isWrongRound(err: unknown): boolean {
  return err instanceof ApiError && err.status === 409 && err.detail.includes("current round");
}

async function readDetail(r: Response): Promise<string> {
  const text = await r.text();
  try {
    const body = JSON.parse(text) as { detail?: unknown };
    if (typeof body.detail === "string") return body.detail;
  } catch {
    // not JSON; fall through to the raw text
  }
  return text;
}

export class WireApi {
  private readonly fetchImpl: FetchLike;

  constructor(
    readonly baseUrl: string,
    fetchImpl?: FetchLike,
  ) {
    this.fetchImpl = fetchImpl ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(
    method: string,
    path: string,
    opts: { token?: string; body?: unknown; allow?: number[] } = {},
  ): Promise<{ status: number; body: T }> {
    const headers: Record<string, string> = { "content-type": "application/json" };
    if (opts.token) headers.authorization = `Bearer ${opts.token}`;
    const r = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers,
      body: opts.body === undefined ? undefined : JSON.stringify(opts.body),
    });
    if (r.status !== 200 && !(opts.allow ?? []).includes(r.status)) {
      throw new ApiError(method, path, r.status, await readDetail(r));
    }
    return { status: r.status, body: (await r.json()) as T };
  }

  async createGroup(
    config: GroupConfigJson,
    a: string,
  ): Promise<{ group_id: string; join_secret: string }> {
    const out = await this.request<{ group_id: string; join_secret: string }>("POST", "/groups", {
      body: { config, a },
    });
    return out.body;
  }

  async join(groupId: string, joinSecret: string): Promise<JoinResponse> {
    const out = await this.request<JoinResponse>("POST", `/groups/${groupId}/join`, {
      body: { join_secret: joinSecret },
    });
    return out.body;
  }

  async groupInfo(groupId: string, token: string): Promise<GroupInfo> {
    const out = await this.request<GroupInfo>("GET", `/groups/${groupId}`, { token });
    return out.body;
  }

  async leave(groupId: string, token: string, attestedZero: boolean): Promise<number> {
    const out = await this.request<{ leave_round: number }>("POST", `/groups/${groupId}/leave`, {
      token,
      body: { attested_zero: attestedZero },
    });
    return out.body.leave_round;
  }

  async submit(
    groupId: string,
    token: string,
    m: number,
    vector: string,
    announce: string | null,
  ): Promise<void> {
    const body: { vector: string; announce?: string } = { vector };
    if (announce !== null) body.announce = announce;
    await this.request("POST", `/groups/${groupId}/rounds/${m}/submission`, { token, body });
  }

  /** The round digest, or null while the round is still open (404). */
  async digest(groupId: string, token: string, m: number): Promise<DigestWire | null> {
    const out = await this.request<DigestWire>("GET", `/groups/${groupId}/rounds/${m}/digest`, {
      token,
      allow: [404],
    });
    return out.status === 404 ? null : out.body;
  }

  async report(groupId: string, token: string, m: number): Promise<void> {
    await this.request("POST", `/groups/${groupId}/rounds/${m}/report`, { token, body: {} });
  }

  /** Revealed cell word, or null when the round's cells were pruned (410). */
  async reveal(
    groupId: string,
    token: string,
    m: number,
    accused: number,
    target: number,
  ): Promise<string | null> {
    const out = await this.request<{ entry: string }>(
      "POST",
      `/groups/${groupId}/rounds/${m}/reveal`,
      { token, body: { accused, target }, allow: [410] },
    );
    return out.status === 410 ? null : out.body.entry;
  }

  async log(groupId: string, token: string, start: number): Promise<DigestWire[]> {
    const out = await this.request<{ entries: DigestWire[] }>(
      "GET",
      `/groups/${groupId}/log?start=${start}`,
      { token },
    );
    return out.body.entries;
  }

  async settle(
    groupId: string,
    token: string,
  ): Promise<{ settle_round: number; balances: Record<string, string> }> {
    const out = await this.request<{ settle_round: number; balances: Record<string, string> }>(
      "POST",
      `/groups/${groupId}/settle`,
      { token, body: {} },
    );
    return out.body;
  }
}
