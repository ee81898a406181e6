import { beforeEach, describe, expect, it, vi } from "vitest";

import { StudioClient } from "../src/api.js";
import { SessionStore } from "../src/store.js";

/** Minimal in-memory fake of the service protocol surface. */
function fakeService() {
  const state = {
    id: "abc",
    steps: [] as { op: string; params: Record<string, unknown>; label: null }[],
    volume: 0.1925,
    face_count: 6,
    pending: null as null | Record<string, unknown>,
    regularizer_enabled: true,
  };
  const fetchMock = vi.fn(async (url: string, init?: RequestInit) => {
    const path = url.replace("http://fake", "");
    const method = init?.method ?? "GET";
    const respond = (body: unknown, status = 200) =>
      new Response(JSON.stringify(body), { status });
    if (method === "POST" && path === "/sessions") return respond({ id: "abc" });
    if (method === "GET" && path === "/sessions/abc") return respond(state);
    if (method === "POST" && path === "/sessions/abc/strokes") {
      state.pending = {
        op: "Extrude", params: { face_id: 6, offset: 0.25 }, op_type: "Extrude",
        ambiguous: false, diagnostics: [],
        preview: { vertices: [], triangles: [], decimated: false },
        preview_volume: 0.27,
      };
      return respond({ interpretation: state.pending });
    }
    if (method === "POST" && path === "/sessions/abc/confirm") {
      if (!state.pending) return respond("nothing pending", 409);
      state.steps.push({ op: "Extrude", params: { face_id: 6, offset: 0.25 }, label: null });
      state.pending = null;
      state.volume = 0.27;
      return respond(state);
    }
    if (method === "POST" && path === "/sessions/abc/undo") {
      if (state.pending) state.pending = null;
      else state.steps.pop();
      return respond(state);
    }
    if (method === "GET" && path === "/sessions/abc/protocol") {
      return new Response(JSON.stringify({ version: 1, steps: state.steps }), { status: 200 });
    }
    if (method === "PATCH" && path === "/sessions/abc/ops/0") {
      return respond("edit rejected", 409);
    }
    return respond(`unhandled ${method} ${path}`, 500);
  });
  vi.stubGlobal("fetch", fetchMock);
  return { state, fetchMock };
}

describe("session store", () => {
  beforeEach(() => vi.unstubAllGlobals());

  it("adopts server state on start", async () => {
    fakeService();
    const store = new SessionStore(new StudioClient("http://fake"));
    await store.start();
    expect(store.sid).toBe("abc");
    expect(store.state?.volume).toBeCloseTo(0.1925);
  });

  it("submit -> confirm moves pending into steps and mirrors the server", async () => {
    fakeService();
    const store = new SessionStore(new StudioClient("http://fake"));
    await store.start();
    await store.submitStrokes([[[0.1, 0.1], [0.5, 0.5]]]);
    expect(store.pending?.op_type).toBe("Extrude");
    expect(store.steps.length).toBe(0);
    await store.confirm();
    expect(store.pending).toBeNull();
    expect(store.steps.length).toBe(1);
    expect(await store.mirrorsServer()).toBe(true);
  });

  it("undo clears pending first, then pops steps", async () => {
    fakeService();
    const store = new SessionStore(new StudioClient("http://fake"));
    await store.start();
    await store.submitStrokes([[[0.1, 0.1], [0.5, 0.5]]]);
    await store.undo();
    expect(store.pending).toBeNull();
    expect(store.steps.length).toBe(0);
  });

  it("rejected tune records the server diagnostic and keeps state", async () => {
    fakeService();
    const store = new SessionStore(new StudioClient("http://fake"));
    await store.start();
    await store.submitStrokes([[[0.1, 0.1], [0.5, 0.5]]]);
    await store.confirm();
    await expect(store.tune(0, "offset", 99)).rejects.toThrow();
    expect(store.lastError).toContain("edit rejected");
    expect(store.steps.length).toBe(1);
  });

  it("queues concurrent stroke submissions", async () => {
    const { fetchMock } = fakeService();
    const store = new SessionStore(new StudioClient("http://fake"));
    await store.start();
    const order: string[] = [];
    const original = fetchMock.getMockImplementation()!;
    fetchMock.mockImplementation(async (url: string, init?: RequestInit) => {
      if (String(url).endsWith("/strokes")) {
        order.push("begin");
        await new Promise((r) => setTimeout(r, 20));
        order.push("end");
      }
      return original(url as never, init);
    });
    await Promise.all([
      store.submitStrokes([[[0, 0], [1, 1]]]),
      store.submitStrokes([[[0, 1], [1, 0]]]),
    ]);
    expect(order).toEqual(["begin", "end", "begin", "end"]);
  });
});
