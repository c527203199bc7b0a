/**
 * HTML for the group screen, as pure string builders over view data. The
 * DOM layer injects these and listens for clicks on [data-action]; nothing
 * here holds state, so each view is assertable as a plain string.
 */

import { ChargePreview, GroupView, SettlementView } from "./viewmodel.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

export function renderAlerts(view: GroupView): string {
  if (!view.openAlerts.length) return "";
  const items = view.openAlerts
    .map(
      (a) =>
        `<li class="alert alert-${a.kind}">round ${a.round}: ${escapeHtml(a.note)} ` +
        `<button data-action="ack-alert" data-round="${a.round}">acknowledge</button></li>`,
    )
    .join("");
  return `<section class="alerts" role="alert"><h2>Needs attention</h2><ul>${items}</ul></section>`;
}

export function renderMembers(view: GroupView): string {
  const rows = view.members
    .map((m) => {
      const status = m.leaveRound !== null && !m.active ? "left" : m.active ? "active" : "joining";
      return `<tr${m.isSelf ? ' class="self"' : ""}><td>${escapeHtml(m.label)}</td><td>${status}</td></tr>`;
    })
    .join("");
  return `<section class="members"><h2>Members</h2><table><tbody>${rows}</tbody></table></section>`;
}

export function renderCharges(view: GroupView): string {
  if (!view.charges.length) {
    return `<section class="charges"><h2>Charges to you</h2><p>None yet.</p></section>`;
  }
  const rows = view.charges
    .map((c) => {
      const announced = c.announced === null ? "" : ` of a ${c.announced} bill`;
      const state =
        c.resolution === "pending"
          ? `<button data-action="accept" data-round="${c.round}">accept</button> ` +
            `<button data-action="reject" data-round="${c.round}">reject</button>`
          : c.resolution + (c.autoAccepted ? " (auto)" : "");
      return (
        `<tr><td>round ${c.round}</td><td>${escapeHtml(c.chargerLabel)}</td>` +
        `<td>${escapeHtml(c.amount)}${escapeHtml(announced)}</td><td>${state}</td></tr>`
      );
    })
    .join("");
  return (
    `<section class="charges"><h2>Charges to you</h2>` +
    `<table><thead><tr><th>round</th><th>from</th><th>amount</th><th></th></tr></thead>` +
    `<tbody>${rows}</tbody></table></section>`
  );
}

export function renderChargeForm(view: GroupView, preview: ChargePreview | null): string {
  if (!view.canCharge) return "";
  const options = view.members
    .filter((m) => m.active && !m.isSelf)
    .map((m) => `<option value="${m.index}">${escapeHtml(m.label)}</option>`)
    .join("");
  const hint =
    preview === null
      ? ""
      : preview.ok
        ? `<p class="preview">${escapeHtml(preview.label)}</p>`
        : `<p class="preview error">${escapeHtml(preview.reason)}</p>`;
  return (
    `<section class="charge-form"><h2>Charge a member</h2>` +
    `<label>Who <select id="charge-target">${options}</select></label> ` +
    `<label>Amount <input id="charge-amount" placeholder="20.14" inputmode="decimal"></label> ` +
    `<button data-action="charge">charge</button>${hint}` +
    `<h2>Split a bill</h2>` +
    `<label>Total <input id="split-total" placeholder="80.56" inputmode="decimal"></label> ` +
    `<button data-action="split">split evenly</button></section>`
  );
}

export function renderSettlement(s: SettlementView): string {
  const rows = s.rows
    .map((r) => `<tr><td>${escapeHtml(r.label)}</td><td>${escapeHtml(r.netLabel)}</td></tr>`)
    .join("");
  const transfers = s.transfers.length
    ? s.transfers
        .map(
          (t) =>
            `<li>${escapeHtml(t.fromLabel)} pays ${escapeHtml(t.toLabel)} ${escapeHtml(t.amount)}</li>`,
        )
        .join("")
    : "<li>everyone is even</li>";
  const action = s.selfAction ? `<p class="self-action">You: ${escapeHtml(s.selfAction)}.</p>` : "";
  return (
    `<section class="settlement"><h2>Settled</h2>` +
    `<table><tbody>${rows}</tbody></table>` +
    `<h3>Who pays whom</h3><ul class="transfers">${transfers}</ul>${action}</section>`
  );
}

export function renderStatusBar(view: GroupView, error: string | null): string {
  const err = error === null ? "" : `<span class="error">${escapeHtml(error)}</span>`;
  return (
    `<header class="status"><strong>${escapeHtml(view.balanceLabel)}</strong>` +
    `<span>group ${escapeHtml(view.groupId)}</span>` +
    `<span>round ${view.round} · ${escapeHtml(view.phaseLabel)}</span>` +
    `<span>${escapeHtml(view.scheduleLabel)}</span>${err}</header>`
  );
}

export function renderActions(view: GroupView): string {
  const settle = view.canSettle ? `<button data-action="settle">settle up</button> ` : "";
  const invite = view.settling ? "" : `<button data-action="invite">invite</button> `;
  const leave = view.canLeave ? `<button data-action="leave">leave group</button>` : "";
  if (!settle && !invite && !leave) return "";
  return `<section class="actions">${settle}${invite}${leave}</section>`;
}

export function renderGroup(
  view: GroupView,
  preview: ChargePreview | null,
  settlement: SettlementView | null,
  error: string | null,
): string {
  return (
    renderStatusBar(view, error) +
    renderAlerts(view) +
    (settlement ? renderSettlement(settlement) : "") +
    renderCharges(view) +
    renderMembers(view) +
    (settlement ? "" : renderChargeForm(view, preview)) +
    (settlement ? "" : renderActions(view))
  );
}
