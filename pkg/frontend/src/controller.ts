/**
 * Session controller: the single mutation path between the views and the
 * service. Creating, restoring, and editing a session all round-trip
 * through the server, so a page reload rebuilds the identical view from
 * server state alone.
 */

import {
  ApiClient,
  type RankingResponse,
  type SessionCreateBody,
  type SessionView,
  type TrajectoryResponse,
} from "./api.js";
import {
  initialViewState,
  withScope,
  withStop,
  withT,
  type Scope,
  type SessionViewState,
} from "./state.js";

export class SessionController {
  private constructor(
    readonly api: ApiClient,
    public session: SessionView,
    public view: SessionViewState,
  ) {}

  static async create(
    api: ApiClient,
    body: SessionCreateBody,
  ): Promise<SessionController> {
    const session = await api.createSession(body);
    return new SessionController(api, session, initialViewState(session));
  }

  /** Rebuild a controller purely from the server's record of the session. */
  static async restore(api: ApiClient, id: string): Promise<SessionController> {
    const session = await api.session(id);
    return new SessionController(api, session, initialViewState(session));
  }

  get id(): string {
    return this.session.id;
  }

  setScope(scope: Scope): void {
    this.view = withScope(this.view, scope);
  }

  async setT(t: number): Promise<SessionView> {
    this.view = withT(this.view, t);
    this.session = await this.api.patchSession(this.id, { t: this.view.t });
    return this.session;
  }

  async setStop(attribute: string, value: number): Promise<SessionView> {
    this.view = withStop(this.view, attribute, value);
    this.session = await this.api.patchSession(this.id, {
      stops: this.view.stops,
    });
    return this.session;
  }

  async setTarget(target: string): Promise<SessionView> {
    this.session = await this.api.patchSession(this.id, { target });
    this.view = { ...this.view, target: this.session.target };
    return this.session;
  }

  trajectory(
    steps: number,
    meshFormat: "glb" | "obj" | "none" = "glb",
  ): Promise<TrajectoryResponse> {
    return this.api.trajectory(this.id, steps, meshFormat);
  }

  /** Trajectory with the exact body text, for byte-level comparisons. */
  trajectoryRaw(
    steps: number,
    meshFormat: "glb" | "obj" | "none" = "glb",
  ): Promise<{ data: TrajectoryResponse; text: string }> {
    return this.api.getRaw(this.api.trajectoryPath(this.id, steps, meshFormat));
  }

  ranking(): Promise<RankingResponse> {
    return this.api.ranking(this.id);
  }

  rankingRaw(): Promise<{ data: RankingResponse; text: string }> {
    return this.api.rankingRaw(this.id);
  }
}
