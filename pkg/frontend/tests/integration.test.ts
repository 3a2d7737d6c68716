// @vitest-environment jsdom
/**
 * End-to-end against the real service: seeds a corpus through the CLI,
 * starts the HTTP server, and drives the console UI in jsdom. The
 * advisor's approve click must move the case to ParalegalFinalize as
 * observed through the raw API, and a fully filled feedback form must
 * submit a payload the server accepts.
 */
import { execFileSync, spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { ConsoleStore } from "../src/state.js";
import { render } from "../src/ui.js";

const PORT = 8710;
const BASE = `http://127.0.0.1:${PORT}`;
const REPO = join(__dirname, "..", "..");
const CONFIG = join(REPO, "fixtures", "config.json");
const nodeFetch: typeof fetch = (...args) => globalThis.fetch(...args);

let server: ChildProcess | null = null;

async function until<T>(probe: () => Promise<T | null>, timeoutMs = 20000, stepMs = 250): Promise<T> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    const value = await probe().catch(() => null);
    if (value !== null) return value;
    if (Date.now() > deadline) throw new Error("timed out waiting for condition");
    await new Promise((resolve) => setTimeout(resolve, stepMs));
  }
}

beforeAll(async () => {
  const workdir = mkdtempSync(join(tmpdir(), "console-e2e-"));
  const cli = (...args: string[]) =>
    execFileSync("lexrag", args, { cwd: workdir, stdio: "pipe" });
  cli("--config", CONFIG, "ingest-docs", join(REPO, "fixtures", "docs.jsonl"));
  cli("ingest-triples", join(REPO, "fixtures", "triples.tsv"));
  cli("train-kg");

  server = spawn("lexrag", ["--config", CONFIG, "serve", "--port", String(PORT)], {
    cwd: workdir,
    stdio: "ignore",
  });
  await until(async () => {
    const response = await globalThis.fetch(`${BASE}/v1/healthz`);
    return response.ok ? true : null;
  });
}, 60000);

afterAll(() => {
  server?.kill();
});

describe("review console against the live service", () => {
  let caseId: string;

  it("a consultant query lands in the advisor queue", async () => {
    const consultant = new ApiClient(BASE, "consultant-token", nodeFetch);
    const reply = await consultant.query("What damages follow a breach of contract?");
    expect(reply.ok).toBe(true);
    if (!reply.ok) return;
    caseId = reply.data.case_id;
    expect(reply.data.abstained).toBe(false);

    const advisor = new ApiClient(BASE, "advisor-token", nodeFetch);
    const queue = await advisor.queue();
    expect(queue.ok && queue.data.items.some((c) => c.case_id === caseId)).toBe(true);
  });

  it("an advisor approve click moves the case to ParalegalFinalize (seen via the API)", async () => {
    document.body.innerHTML = '<div id="app"></div>';
    const root = document.getElementById("app")!;
    const store = new ConsoleStore(new ApiClient(BASE, "advisor-token", nodeFetch));
    store.state.role = "Advisor";
    await store.refresh();
    store.selectCase(caseId);
    render(store, root);

    const approve = root.querySelector<HTMLButtonElement>("[data-testid=action-approve]");
    expect(approve).not.toBeNull();
    approve!.click();

    const raw = new ApiClient(BASE, "admin-token", nodeFetch);
    const state = await until(async () => {
      const detail = await raw.getCase(caseId);
      return detail.ok && detail.data.state === "ParalegalFinalize" ? detail.data.state : null;
    });
    expect(state).toBe("ParalegalFinalize");
  }, 30000);

  it("the paralegal finalizes through the UI", async () => {
    document.body.innerHTML = '<div id="app"></div>';
    const root = document.getElementById("app")!;
    const store = new ConsoleStore(new ApiClient(BASE, "paralegal-token", nodeFetch));
    store.state.role = "Paralegal";
    await store.refresh();
    store.selectCase(caseId);
    render(store, root);

    const finalize = root.querySelector<HTMLButtonElement>("[data-testid=action-finalize]");
    expect(finalize).not.toBeNull();
    finalize!.click();

    const raw = new ApiClient(BASE, "admin-token", nodeFetch);
    const state = await until(async () => {
      const detail = await raw.getCase(caseId);
      return detail.ok && detail.data.state === "Released" ? detail.data.state : null;
    });
    expect(state).toBe("Released");
  }, 30000);

  it("a fully set feedback form submits a payload the server accepts", async () => {
    document.body.innerHTML = '<div id="app"></div>';
    const root = document.getElementById("app")!;
    const store = new ConsoleStore(new ApiClient(BASE, "paralegal-token", nodeFetch));
    store.state.role = "Paralegal";
    store.selectCase(caseId);
    await store.refresh(); // released cases leave the queue; refresh pulls the detail
    render(store, root);

    const submit = () =>
      root.querySelector<HTMLButtonElement>("[data-testid=feedback-submit]")!;
    expect(submit().hasAttribute("disabled")).toBe(true);

    for (const [component, value] of [
      ["relevance", "1"],
      ["accuracy", "1"],
      ["compliance", "0.75"],
      ["satisfaction", "0.75"],
    ] as const) {
      const box = root.querySelector<HTMLSelectElement>(`[data-testid=feedback-${component}]`)!;
      box.value = value;
      box.dispatchEvent(new Event("change"));
    }
    expect(submit().hasAttribute("disabled")).toBe(false);
    submit().click();

    const reward = await until(async () =>
      store.state.lastFeedback ? store.state.lastFeedback.reward : null
    );
    expect(reward).toBeCloseTo(0.25 * (1 + 1 + 0.75 + 0.75), 9);

    const raw = new ApiClient(BASE, "admin-token", nodeFetch);
    const metrics = await raw.metrics();
    expect(metrics.ok && metrics.data.n_feedback).toBe(1);
  }, 30000);

  it("the metrics panel reflects a policy version bump after a forced update", async () => {
    const admin = new ApiClient(BASE, "admin-token", nodeFetch);
    const before = await admin.metrics();
    expect(before.ok).toBe(true);
    const updated = await admin.updatePolicy(true);
    expect(updated.ok && updated.data.updated).toBe(true);

    const store = new ConsoleStore(new ApiClient(BASE, "advisor-token", nodeFetch));
    store.state.role = "Advisor";
    await store.refresh();
    expect(store.state.metrics?.policy_version).toBe(
      before.ok ? before.data.policy_version + 1 : -1
    );
  }, 30000);

  it("wrong-role actions surface the server's error, state unchanged", async () => {
    const consultantish = new ConsoleStore(new ApiClient(BASE, "consultant-token", nodeFetch));
    consultantish.state.role = "Advisor"; // UI role toggled, token still consultant
    const fresh = new ApiClient(BASE, "consultant-token", nodeFetch);
    const reply = await fresh.query("What damages follow a breach of contract?");
    expect(reply.ok).toBe(true);
    if (!reply.ok) return;
    await consultantish.refresh();
    const ok = await consultantish.review(reply.data.case_id, "approve");
    expect(ok).toBe(false);
    expect(consultantish.state.banner?.text).toContain("role");

    const raw = new ApiClient(BASE, "admin-token", nodeFetch);
    const detail = await raw.getCase(reply.data.case_id);
    expect(detail.ok && detail.data.state).toBe("Aggregated");
  }, 30000);
});
