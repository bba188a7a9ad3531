/**
 * Single-page planner shell.
 *
 * Routing is by URL hash: "#/sessions/s0001" opens an existing session and
 * rebuilds the whole view from server state; anything else shows the
 * session creation form. All scientific values on screen are fetched.
 */

import { ApiClient, ServiceError, type TrajectoryResponse } from "./api.js";
import { buildEmbeddingSvg } from "./embedding.js";
import { decodeBase64, parseGlb } from "./glb.js";
import { buildProcedurePanel } from "./procedure.js";
import { buildRankingTable } from "./ranking.js";
import { SessionController } from "./controller.js";
import { TrajectoryScrubber } from "./scrub.js";
import { drawMesh, stripIndices } from "./shape.js";
import {
  ATTRIBUTE_NAMES,
  COLORMAP_MAX_MM,
  scopeForAttribute,
  scopeLabel,
  type Scope,
} from "./state.js";

const TRAJECTORY_STEPS = 10;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  html?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (html !== undefined) node.innerHTML = html;
  return node;
}

function errorBanner(err: unknown, retry: () => void): HTMLElement {
  const message =
    err instanceof ServiceError ? `${err.status}: ${err.detail}` : String(err);
  const banner = el("div", "error-banner");
  banner.append(el("span", "", `service error — ${message} `));
  const btn = el("button", "", "retry");
  btn.addEventListener("click", retry);
  banner.append(btn);
  return banner;
}

export class PlannerApp {
  private controller: SessionController | null = null;
  private scrubber: TrajectoryScrubber<TrajectoryResponse> | null = null;
  private lastTrajectory: TrajectoryResponse | null = null;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
  ) {}

  async start(): Promise<void> {
    window.addEventListener("hashchange", () => void this.route());
    await this.route();
  }

  private async route(): Promise<void> {
    const match = /^#\/sessions\/(s\d+)$/.exec(window.location.hash);
    try {
      if (match) {
        this.controller = await SessionController.restore(
          this.api,
          match[1] as string,
        );
        await this.renderSession();
      } else {
        await this.renderCreateForm();
      }
    } catch (err) {
      this.root.replaceChildren(errorBanner(err, () => void this.route()));
    }
  }

  // -- session creation ------------------------------------------------------

  private async renderCreateForm(): Promise<void> {
    const [models, analyses, procedures, sessions] = await Promise.all([
      this.api.models(),
      this.api.analyses(),
      this.api.procedures(),
      this.api.sessions(),
    ]);
    const form = el("div", "create-form");
    form.append(el("h2", "", "new planning session"));

    const modelSel = el("select", "model");
    for (const m of models.models) {
      modelSel.append(new Option(m.id, m.id));
    }
    const analysisSel = el("select", "analysis");
    for (const a of analyses.analyses) {
      analysisSel.append(new Option(a.id, a.id));
    }
    const procSel = el("select", "procedure");
    for (const p of procedures.procedures) {
      procSel.append(new Option(p.name, p.name));
    }
    const patientInput = el("input") as HTMLInputElement;
    patientInput.placeholder = "patient id";
    const meshInput = el("input") as HTMLInputElement;
    meshInput.type = "file";

    const submit = el("button", "", "create session");
    submit.addEventListener("click", () => {
      void (async () => {
        const file = meshInput.files?.[0];
        if (!file || !patientInput.value) return;
        const bytes = new Uint8Array(await file.arrayBuffer());
        let b64 = "";
        for (const b of bytes) b64 += String.fromCharCode(b);
        const encoded = await this.api.encode(modelSel.value, btoa(b64));
        this.controller = await SessionController.create(this.api, {
          patient_id: patientInput.value,
          latent: encoded.latent,
          model: modelSel.value,
          analysis: analysisSel.value,
          procedure: procSel.value,
        });
        window.location.hash = `#/sessions/${this.controller.id}`;
      })().catch((err) => {
        form.prepend(errorBanner(err, () => submit.click()));
      });
    });

    form.append(patientInput, meshInput, modelSel, analysisSel, procSel, submit);

    if (sessions.sessions.length > 0) {
      const list = el("ul", "session-list");
      for (const s of sessions.sessions) {
        const li = el(
          "li",
          "",
          `<a href="#/sessions/${s.id}">${s.id}</a> — ${s.patient_id} / ${s.procedure}`,
        );
        list.append(li);
      }
      form.append(el("h3", "", "existing sessions"), list);
    }
    this.root.replaceChildren(form);
  }

  // -- session view ----------------------------------------------------------

  private async renderSession(): Promise<void> {
    const c = this.controller;
    if (!c) return;
    this.root.replaceChildren();

    const tabs = el("nav", "scope-tabs");
    const scopes: Scope[] = [
      "whole",
      ...ATTRIBUTE_NAMES.map((_, i) => scopeForAttribute(i)),
    ];
    for (const scope of scopes) {
      const b = el("button", scope === c.view.scope ? "tab active" : "tab");
      b.textContent = scopeLabel(scope);
      b.dataset["scope"] = scope;
      b.addEventListener("click", () => {
        c.setScope(scope);
        for (const other of tabs.querySelectorAll("button")) {
          other.classList.toggle(
            "active",
            other.dataset["scope"] === scope,
          );
        }
        void this.refreshEmbedding();
      });
      tabs.append(b);
    }

    const embeddingBox = el("section", "embedding-box");
    const panelBox = el("section", "panel-box");
    const shapeBox = el("section", "shape-box");
    const canvas = el("canvas") as HTMLCanvasElement;
    canvas.width = 420;
    canvas.height = 420;
    const strip = el("div", "strip");
    shapeBox.append(canvas, strip);
    const rankingBox = el("section", "ranking-box");

    this.root.append(
      el("h2", "", `session ${c.id} — ${c.session.patient_id}`),
      tabs,
      embeddingBox,
      panelBox,
      shapeBox,
      rankingBox,
    );

    this.scrubber = new TrajectoryScrubber<TrajectoryResponse>(
      async (t) => {
        await c.setT(t);
        return c.trajectory(TRAJECTORY_STEPS);
      },
      (body) => this.applyTrajectory(body, canvas, strip, embeddingBox),
      {
        onError: (err) =>
          this.root.prepend(errorBanner(err, () => void this.refreshAll())),
      },
    );

    const renderPanel = () => {
      panelBox.innerHTML = buildProcedurePanel(
        [{ name: c.session.procedure, attributes: c.session.procedure_attributes }],
        c.session,
      );
      const tSlider = panelBox.querySelector<HTMLInputElement>("input.t");
      tSlider?.addEventListener("input", () => {
        this.scrubber?.request(Number(tSlider.value));
      });
      for (const stop of panelBox.querySelectorAll<HTMLInputElement>(
        "input.stop",
      )) {
        stop.addEventListener("change", () => {
          void (async () => {
            await c.setStop(
              stop.dataset["attribute"] as string,
              Number(stop.value),
            );
            await this.refreshAll();
          })().catch((err) =>
            panelBox.prepend(errorBanner(err, () => void this.refreshAll())),
          );
        });
      }
      const target = panelBox.querySelector<HTMLSelectElement>(
        "select.target-select",
      );
      target?.addEventListener("change", () => {
        void (async () => {
          await c.setTarget(target.value);
          await this.refreshAll();
        })().catch((err) =>
          panelBox.prepend(errorBanner(err, () => void this.refreshAll())),
        );
      });
    };

    renderPanel();
    await this.refreshAll();
  }

  private applyTrajectory(
    body: TrajectoryResponse,
    canvas: HTMLCanvasElement,
    strip: HTMLElement,
    embeddingBox: HTMLElement,
  ): void {
    const c = this.controller;
    if (!c) return;
    this.lastTrajectory = body;
    const current = body.steps[body.steps.length - 1];
    if (current?.mesh_glb) {
      const mesh = parseGlb(decodeBase64(current.mesh_glb));
      drawMesh(canvas, mesh, c.view.camera, COLORMAP_MAX_MM);
    }

    strip.replaceChildren();
    for (const i of stripIndices(body.steps.length)) {
      const step = body.steps[i];
      if (!step?.mesh_glb) continue;
      const frame = el("canvas") as HTMLCanvasElement;
      frame.width = 96;
      frame.height = 96;
      frame.title = `t=${step.t.toFixed(2)}`;
      drawMesh(
        frame,
        parseGlb(decodeBase64(step.mesh_glb)),
        c.view.camera,
        COLORMAP_MAX_MM,
      );
      strip.append(frame);
    }
    void this.refreshEmbedding(embeddingBox);
  }

  private embeddingBoxEl: HTMLElement | null = null;

  private async refreshEmbedding(box?: HTMLElement): Promise<void> {
    const c = this.controller;
    if (!c) return;
    if (box) this.embeddingBoxEl = box;
    const target = this.embeddingBoxEl ?? this.root.querySelector(".embedding-box");
    if (!target) return;
    const body = await this.api.embedding(
      c.session.analysis,
      c.view.scope,
      c.id,
    );
    const polyline: [number, number][] = (this.lastTrajectory?.steps ?? [])
      .map((s) => s.embedded[c.view.scope])
      .filter((p): p is [number, number] => Array.isArray(p));
    (target as HTMLElement).innerHTML = buildEmbeddingSvg(body, polyline);
  }

  private async refreshAll(): Promise<void> {
    const c = this.controller;
    if (!c) return;
    const canvas = this.root.querySelector("canvas");
    const strip = this.root.querySelector(".strip");
    const rankingBox = this.root.querySelector(".ranking-box");
    const embeddingBox = this.root.querySelector(".embedding-box");
    const [trajectory, ranking] = await Promise.all([
      c.trajectory(TRAJECTORY_STEPS),
      c.ranking(),
    ]);
    if (canvas && strip && embeddingBox) {
      this.applyTrajectory(
        trajectory,
        canvas as HTMLCanvasElement,
        strip as HTMLElement,
        embeddingBox as HTMLElement,
      );
    }
    if (rankingBox) {
      (rankingBox as HTMLElement).innerHTML = buildRankingTable(ranking);
    }
  }
}

export function mountPlanner(root: HTMLElement, baseUrl: string): PlannerApp {
  const app = new PlannerApp(root, new ApiClient(baseUrl));
  void app.start();
  return app;
}
