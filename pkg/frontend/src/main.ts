/**
 * DOM wiring: a hash router with three screens.
 *
 *   #/            picker: base URL + session id, or create a fresh session
 *   #/respond     respondent view driving the adaptive loop
 *   #/dashboard   read-only experimenter telemetry, polled every 2 s
 */

import { ApiClient } from "./api.js";
import { renderLineChart } from "./chart.js";
import { DashboardPoller, DashboardView } from "./dashboard.js";
import { RespondentFlow, QuestionView } from "./respondent.js";

const app = document.getElementById("app") as HTMLElement;
let activePoller: DashboardPoller | null = null;

function params(): URLSearchParams {
  const hash = window.location.hash;
  const q = hash.indexOf("?");
  return new URLSearchParams(q >= 0 ? hash.slice(q + 1) : "");
}

function route(): string {
  const hash = window.location.hash;
  if (hash.startsWith("#/respond")) return "respond";
  if (hash.startsWith("#/dashboard")) return "dashboard";
  return "picker";
}

function el(html: string): HTMLElement {
  const tpl = document.createElement("template");
  tpl.innerHTML = html.trim();
  return tpl.content.firstElementChild as HTMLElement;
}

function renderPicker(): void {
  app.replaceChildren(el(`
    <section class="picker">
      <h1>Paired-comparison survey</h1>
      <label>Service URL <input id="base" value="${window.location.origin}"></label>
      <label>Session id <input id="session" placeholder="existing session id"></label>
      <div class="row">
        <button id="go-respond">Answer questions</button>
        <button id="go-dash">Open dashboard</button>
      </div>
      <hr>
      <label>New demo session, attributes (comma-separated)
        <input id="attrs" value="logo,dark mode,free tier,ads,badges,api access">
      </label>
      <button id="create">Create session</button>
      <p id="msg" class="msg"></p>
    </section>
  `));
  const base = () => (document.getElementById("base") as HTMLInputElement).value;
  const session = () => (document.getElementById("session") as HTMLInputElement).value;
  document.getElementById("go-respond")!.addEventListener("click", () => {
    window.location.hash = `#/respond?base=${encodeURIComponent(base())}&session=${session()}`;
  });
  document.getElementById("go-dash")!.addEventListener("click", () => {
    window.location.hash = `#/dashboard?base=${encodeURIComponent(base())}&session=${session()}`;
  });
  document.getElementById("create")!.addEventListener("click", async () => {
    const attrs = (document.getElementById("attrs") as HTMLInputElement).value
      .split(",").map((s) => s.trim()).filter(Boolean);
    try {
      const api = new ApiClient(base());
      const created = await api.createSession(attrs);
      (document.getElementById("session") as HTMLInputElement).value = created.session_id;
      document.getElementById("msg")!.textContent =
        `created session ${created.session_id}`;
    } catch (err) {
      document.getElementById("msg")!.textContent = String(err);
    }
  });
}

function questionMarkup(view: QuestionView): HTMLElement {
  const rows = view.rows.map((r) => `
    <tr class="${r.differs ? "differs" : "same"}">
      <td class="side">${r.left ? "&#10003;" : "&mdash;"}</td>
      <th>${r.label}</th>
      <td class="side">${r.right ? "&#10003;" : "&mdash;"}</td>
    </tr>`).join("");
  return el(`
    <section class="question">
      <p class="progress">Question ${view.answered + 1} of ${view.total}</p>
      <table>
        <thead><tr><th>Option A</th><th></th><th>Option B</th></tr></thead>
        <tbody>${rows}</tbody>
      </table>
      <div class="row">
        <button id="pick-a" class="pick">Choose A</button>
        <button id="pick-b" class="pick">Choose B</button>
      </div>
    </section>
  `);
}

async function renderRespondent(): Promise<void> {
  const p = params();
  const api = new ApiClient(p.get("base") ?? window.location.origin);
  const sessionId = p.get("session") ?? "";
  let respondentId = p.get("respondent") ?? "";
  app.replaceChildren(el(`<p class="msg">joining session…</p>`));
  try {
    if (!respondentId) {
      respondentId = await api.addRespondent(sessionId);
    }
  } catch (err) {
    app.replaceChildren(el(`<p class="msg error">${String(err)}</p>`));
    return;
  }
  const flow = new RespondentFlow(api, sessionId, respondentId, {
    onQuestion: (view) => {
      const node = questionMarkup(view);
      app.replaceChildren(node);
      node.querySelector("#pick-a")!.addEventListener("click", () => void flow.choose("z1"));
      node.querySelector("#pick-b")!.addEventListener("click", () => void flow.choose("z2"));
    },
    onDone: () => {
      app.replaceChildren(el(
        `<section class="done"><h2>All done</h2>
         <p>Thanks — your ${flow.question?.total ?? ""} choices were recorded.</p></section>`,
      ));
    },
    onError: (msg) => {
      app.replaceChildren(el(`<p class="msg error">${msg}</p>`));
    },
  });
  await flow.begin();
}

function dashboardMarkup(view: DashboardView): HTMLElement {
  const rows = view.attributes.map((a) => `
    <tr class="${a.decided ? "decided" : ""}">
      <th>${a.label}</th>
      <td>${a.pi.toFixed(3)}</td>
      <td>${a.certainty.toFixed(3)}</td>
      <td>${a.bit ? "on" : "off"}</td>
    </tr>`).join("");
  const product = view.extractedProduct.join("");
  return el(`
    <section class="dashboard">
      <h1>Session ${view.sessionId} <span class="status">${view.status}</span></h1>
      <p>${view.respondentCount} respondents (${view.respondentsDone} done),
         ${view.humanAnswers} answers, ${view.questionCount} recorded events.</p>
      <div id="chart">${view.series.length ? renderLineChart(view.series) : ""}</div>
      <table>
        <thead><tr><th>attribute</th><th>&pi;</th><th>certainty</th><th>current pick</th></tr></thead>
        <tbody>${rows}</tbody>
      </table>
      <p class="product">Extracted product: <code>${product || "n/a"}</code></p>
    </section>
  `);
}

function renderDashboard(): void {
  const p = params();
  const api = new ApiClient(p.get("base") ?? window.location.origin);
  const sessionId = p.get("session") ?? "";
  activePoller?.stop();
  activePoller = new DashboardPoller(api, sessionId, {
    onUpdate: (view) => app.replaceChildren(dashboardMarkup(view)),
    onMissing: () => {
      window.location.hash = "#/";
    },
    onError: (msg) => app.replaceChildren(el(`<p class="msg error">${msg}</p>`)),
  });
  activePoller.start();
}

function render(): void {
  activePoller?.stop();
  activePoller = null;
  const r = route();
  if (r === "respond") void renderRespondent();
  else if (r === "dashboard") renderDashboard();
  else renderPicker();
}

window.addEventListener("hashchange", render);
render();
