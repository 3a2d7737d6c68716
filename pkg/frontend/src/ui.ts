/**
 * DOM rendering. One render pass per state change; handlers delegate to
 * store actions, so every mutation flows through the API client.
 */
import { COMPONENTS, QUALITATIVE_LABELS, RATING_STEPS, setComponent } from "./form.js";
import { CaseSummary } from "./schemas.js";
import { actionsFor, ConsoleStore, Role } from "./state.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  children: Array<Node | string> = []
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  for (const child of children) node.append(child);
  return node;
}

function banner(store: ConsoleStore): HTMLElement {
  const current = store.state.banner;
  if (!current) return el("div");
  const box = el("div", { class: `banner ${current.kind}`, "data-testid": "banner" }, [
    current.text,
  ]);
  if (current.retry) {
    const retry = el("button", { "data-testid": "banner-retry" }, ["retry"]);
    retry.addEventListener("click", () => {
      store.clearBanner();
      current.retry?.();
    });
    box.append(" ", retry);
  }
  const dismiss = el("button", {}, ["dismiss"]);
  dismiss.addEventListener("click", () => store.clearBanner());
  box.append(" ", dismiss);
  return box;
}

function metricsPanel(store: ConsoleStore): HTMLElement {
  const metrics = store.state.metrics;
  if (!metrics) return el("div", { class: "metrics", "data-testid": "metrics" }, ["no metrics yet"]);
  const reward = metrics.mean_reward === null ? "n/a" : metrics.mean_reward.toFixed(3);
  const abstention =
    metrics.abstention_rate_window === null
      ? "n/a"
      : `${(metrics.abstention_rate_window * 100).toFixed(0)}%`;
  return el("div", { class: "metrics", "data-testid": "metrics" }, [
    el("span", { "data-testid": "metrics-policy-version" }, [
      `policy v${metrics.policy_version}`,
    ]),
    el("span", {}, [` · mean reward ${reward}`]),
    el("span", {}, [` · feedback n=${metrics.n_feedback}`]),
    el("span", {}, [` · abstention (window) ${abstention}`]),
  ]);
}

function queueTable(store: ConsoleStore): HTMLElement {
  const rows = store.state.queue.map((item) => {
    const row = el("tr", { "data-testid": `queue-row-${item.case_id}` }, [
      el("td", {}, [item.case_id]),
      el("td", { "data-testid": `state-${item.case_id}` }, [item.state]),
      el("td", {}, [String(item.queries?.length ?? item.scores.questions.length)]),
      el("td", {}, [`${Math.round(item.age_seconds ?? 0)}s`]),
    ]);
    row.addEventListener("click", () => store.selectCase(item.case_id));
    return row;
  });
  return el("table", { class: "queue", "data-testid": "queue" }, [
    el("thead", {}, [
      el("tr", {}, [
        el("th", {}, ["case"]),
        el("th", {}, ["state"]),
        el("th", {}, ["questions"]),
        el("th", {}, ["age"]),
      ]),
    ]),
    el("tbody", {}, rows),
  ]);
}

function gateReport(item: CaseSummary): HTMLElement {
  const lines = item.gate.questions.map((entry) =>
    el("li", {}, [
      `q${entry.index + 1}: active [${entry.active.join(", ")}], gates [` +
        entry.g.map((x) => x.toFixed(3)).join(", ") +
        `]`,
    ])
  );
  return el("ul", { class: "gate-report", "data-testid": "gate-report" }, lines);
}

function docsPreview(item: CaseSummary): HTMLElement {
  const entries = item.scores.questions.flatMap((q) =>
    q.documents.map(([docId, score]) =>
      el("li", {}, [`${docId} (${score.toFixed(3)}) — q${q.index + 1}`])
    )
  );
  return el("ul", { class: "docs", "data-testid": "docs-preview" }, entries);
}

function actionButtons(store: ConsoleStore, item: CaseSummary): HTMLElement {
  const box = el("div", { class: "actions" });
  for (const action of actionsFor(store.state.role, item.state)) {
    if (action === "feedback") continue; // the form renders separately
    const button = el("button", { "data-testid": `action-${action}` }, [action]);
    button.addEventListener("click", () => {
      if (action === "approve") void store.review(item.case_id, "approve");
      else if (action === "revise") {
        const notes = (document.querySelector<HTMLInputElement>("[data-testid=revise-notes]"))
          ?.value ?? "";
        void store.review(item.case_id, "revise", notes);
      } else if (action === "finalize") void store.finalize(item.case_id);
    });
    box.append(button);
  }
  if (store.state.role === "Advisor" && actionsFor("Advisor", item.state).length > 0) {
    box.append(el("input", { "data-testid": "revise-notes", placeholder: "revision notes" }));
  }
  return box;
}

function feedbackForm(store: ConsoleStore): HTMLElement {
  const form = el("div", { class: "feedback", "data-testid": "feedback-form" });
  form.append(el("h3", {}, ["Feedback"]));
  for (const component of COMPONENTS) {
    const select = el("select", { "data-testid": `feedback-${component}` });
    select.append(el("option", { value: "" }, ["(unset)"]));
    for (const step of RATING_STEPS) {
      select.append(el("option", { value: String(step) }, [step.toFixed(2)]));
    }
    const current = store.state.form[component];
    select.value = current === null ? "" : String(current);
    select.addEventListener("change", () => {
      const value = select.value === "" ? null : Number(select.value);
      store.state.form = setComponent(store.state.form, component, value);
      render(store);
    });
    form.append(el("label", {}, [`${component}: `, select]));
  }
  const labelSelect = el("select", { "data-testid": "feedback-label" });
  for (const label of QUALITATIVE_LABELS) {
    labelSelect.append(el("option", { value: label }, [label || "(no qualitative label)"]));
  }
  labelSelect.value = store.state.form.qualitativeLabel;
  labelSelect.addEventListener("change", () => {
    store.state.form = { ...store.state.form, qualitativeLabel: labelSelect.value };
  });
  form.append(el("label", {}, ["label: ", labelSelect]));

  const comment = el("input", { "data-testid": "feedback-comment", placeholder: "comment" });
  comment.value = store.state.form.comment;
  comment.addEventListener("input", () => {
    store.state.form = { ...store.state.form, comment: comment.value };
  });
  form.append(el("label", {}, ["comment: ", comment]));

  const submit = el("button", { "data-testid": "feedback-submit" }, ["submit feedback"]);
  if (!store.canSubmitFeedback()) submit.setAttribute("disabled", "disabled");
  submit.addEventListener("click", () => void store.submitFeedback());
  form.append(submit);
  return form;
}

function caseDetail(store: ConsoleStore): HTMLElement {
  const item = store.selectedCase();
  if (!item) return el("div", { "data-testid": "detail" }, ["select a case from the queue"]);
  const detail = el("div", { class: "detail", "data-testid": "detail" });
  detail.append(el("h2", {}, [`${item.case_id} — ${item.state}`]));
  if (item.queries) {
    detail.append(el("ul", {}, item.queries.map((q) => el("li", {}, [q]))));
  }
  detail.append(el("h3", {}, ["Aggregated answer"]));
  detail.append(el("pre", { "data-testid": "answer" }, [item.answer || "(abstained)"]));
  detail.append(
    el("p", { "data-testid": "citations" }, [
      item.citations.length
        ? "citations: " +
          item.citations.map(([q, s, doc]) => `[q${q + 1}.s${s + 1}] ${doc}`).join(", ")
        : "no citations",
    ])
  );
  detail.append(el("h3", {}, ["Retrieved documents"]));
  detail.append(docsPreview(item));
  detail.append(el("h3", {}, ["Gate report"]));
  detail.append(gateReport(item));
  detail.append(actionButtons(store, item));
  if (store.state.role === "Paralegal") detail.append(feedbackForm(store));
  return detail;
}

function loginView(store: ConsoleStore): HTMLElement {
  const box = el("div", { class: "login", "data-testid": "login" });
  box.append(el("h2", {}, ["Review console sign-in"]));
  const roleSelect = el("select", { "data-testid": "login-role" });
  for (const role of ["Advisor", "Paralegal"]) {
    roleSelect.append(el("option", { value: role }, [role]));
  }
  const tokenInput = el("input", { "data-testid": "login-token", placeholder: "access token" });
  const start = el("button", { "data-testid": "login-submit" }, ["open console"]);
  start.addEventListener("click", () => {
    store.setRole(roleSelect.value as Role, tokenInput.value);
    void store.refresh();
    store.startPolling();
  });
  box.append(el("label", {}, ["role: ", roleSelect]), el("label", {}, ["token: ", tokenInput]), start);
  return box;
}

export function render(store: ConsoleStore, root?: HTMLElement): void {
  const mount = root ?? document.getElementById("app");
  if (!mount) return;
  mount.replaceChildren();
  mount.append(banner(store));
  if (!store.state.role) {
    mount.append(loginView(store));
    return;
  }
  mount.append(
    el("div", { class: "header" }, [
      el("strong", {}, [`${store.state.role} console`]),
      metricsPanel(store),
    ])
  );
  const layout = el("div", { class: "layout" });
  layout.append(queueTable(store), caseDetail(store));
  mount.append(layout);
}

export function mountConsole(store: ConsoleStore, root?: HTMLElement): void {
  store.subscribe(() => render(store, root));
  render(store, root);
}
