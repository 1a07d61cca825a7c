/** Browser entry point: wires the pure renderer to the conduct service. */

import { ConductClient, ConflictError } from "./api.js";
import { renderSession } from "./render.js";
import type { OutcomeEntry, SessionState } from "./types.js";

const client = new ConductClient(
  (window as { COMBODOSE_API?: string }).COMBODOSE_API ?? "",
);

let current: SessionState | null = null;

function root(): HTMLElement {
  const el = document.getElementById("app");
  if (el === null) throw new Error("missing #app container");
  return el;
}

function showError(message: string): void {
  const el = document.getElementById("error");
  if (el !== null) el.textContent = message;
}

function collectOutcomes(form: HTMLFormElement): OutcomeEntry[] {
  const out: OutcomeEntry[] = [];
  for (const row of form.querySelectorAll<HTMLElement>("tr[data-index]")) {
    const idx = row.dataset.index;
    const z = form.querySelector<HTMLSelectElement>(`[name="z-${idx}"]`);
    const e = form.querySelector<HTMLSelectElement>(`[name="e-${idx}"]`);
    out.push({
      z: Number(z?.value ?? 0),
      e: e === null || e.value === "" ? null : Number(e.value),
    });
  }
  return out;
}

function draw(state: SessionState): void {
  current = state;
  root().innerHTML = renderSession(state);
  const form = root().querySelector<HTMLFormElement>("form.outcomes");
  form?.addEventListener("submit", (ev) => {
    ev.preventDefault();
    void submit(form);
  });
}

async function submit(form: HTMLFormElement): Promise<void> {
  if (current === null) return;
  showError("");
  try {
    draw(
      await client.submitOutcomes(
        current.id,
        Number(form.dataset.version),
        collectOutcomes(form),
      ),
    );
  } catch (err) {
    if (err instanceof ConflictError) {
      // someone else advanced the session: reload the authoritative state
      showError(
        "This session changed since the page loaded; the latest state has " +
          "been reloaded. Re-enter the outcomes if they are still pending.",
      );
      draw(await client.getState(current.id));
    } else {
      showError(String(err));
    }
  }
}

export async function loadSession(id: string): Promise<void> {
  showError("");
  try {
    draw(await client.getState(id));
  } catch (err) {
    showError(String(err));
  }
}

document.getElementById("load-form")?.addEventListener("submit", (ev) => {
  ev.preventDefault();
  const input = document.getElementById("session-id") as HTMLInputElement;
  void loadSession(input.value.trim());
});
