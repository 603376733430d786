import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { loadSessionView, submitAnnotationDecision, visibleLanes } from "../src/model.js";
import { FixtureServer, MANIFEST } from "./fixtureServer.js";

function setup() {
  const server = new FixtureServer();
  const api = new ApiClient("", server.fetch);
  return { server, api };
}

describe("submitAnnotationDecision", () => {
  it("confirm round-trips exactly one log record", async () => {
    const { server, api } = setup();
    const { vm } = await loadSessionView(api, MANIFEST.session_id);
    const target = vm.lanes.get("FunctionView")![0]!;
    const before = server.log.length;

    const result = await submitAnnotationDecision(api, vm, { action: "confirm", id: target.id });

    expect(server.log.length).toBe(before + 1);
    expect(result.conflict).toBe(false);
    const lane = result.vm.lanes.get("FunctionView")!;
    expect(lane).toHaveLength(1);
    expect(lane[0]!.status).toBe("confirmed");
    expect(lane[0]!.predecessor).toBe(target.id);
  });

  it("reject is visible only under the rejected filter", async () => {
    const { server, api } = setup();
    const { vm } = await loadSessionView(api, MANIFEST.session_id);
    const target = vm.lanes.get("Navigation")![0]!;

    const result = await submitAnnotationDecision(api, vm, { action: "reject", id: target.id });

    result.vm.filter.status = "rejected";
    const rejected = visibleLanes(result.vm).flatMap(([, anns]) => anns);
    expect(rejected).toHaveLength(1);
    expect(rejected[0]!.kind).toBe("Navigation");

    result.vm.filter.status = "suggested";
    const suggested = visibleLanes(result.vm).flatMap(([, anns]) => anns);
    expect(suggested.map((a) => a.kind)).not.toContain("Navigation");
    expect(server.log.length).toBe(5);
  });

  it("add posts a manual annotation at the playhead", async () => {
    const { server, api } = setup();
    const { vm } = await loadSessionView(api, MANIFEST.session_id);
    vm.playhead = 1_010_000;
    const before = server.log.length;

    const result = await submitAnnotationDecision(api, vm, {
      action: "add",
      kind: "TaskMark",
      t_start: vm.playhead,
      payload: { label: "gave up" },
      author: "reviewer-1",
    });

    expect(server.log.length).toBe(before + 1);
    const marks = result.vm.lanes.get("TaskMark")!;
    expect(marks).toHaveLength(1);
    expect(marks[0]!.status).toBe("manual");
    expect(marks[0]!.t_start).toBe(1_010_000);
    expect(marks[0]!.provenance).toEqual({ human: "reviewer-1" });
  });

  it("never shows optimistic state: the view equals the server state", async () => {
    const { server, api } = setup();
    const { vm } = await loadSessionView(api, MANIFEST.session_id);
    const target = vm.lanes.get("Rename")![0]!;
    const result = await submitAnnotationDecision(api, vm, { action: "confirm", id: target.id });
    const serverIds = new Set(server.currentState().map((r) => r.id));
    const viewIds = new Set(
      visibleLanes(result.vm).flatMap(([, anns]) => anns.map((a) => a.id)),
    );
    expect(viewIds).toEqual(serverIds);
  });

  it("stale edits refetch and flag a conflict", async () => {
    const { server, api } = setup();
    const { vm } = await loadSessionView(api, MANIFEST.session_id);
    const target = vm.lanes.get("FunctionView")![0]!;

    // Another reviewer edits first; our view is now stale.
    await api.patchAnnotation(MANIFEST.session_id, target.id, "rejected", "other");
    const before = server.log.length;

    const result = await submitAnnotationDecision(api, vm, { action: "confirm", id: target.id });

    expect(result.conflict).toBe(true);
    expect(server.log.length).toBe(before); // the conflicting edit appended nothing
    const lane = result.vm.lanes.get("FunctionView")!;
    expect(lane[0]!.status).toBe("rejected"); // refetched truth
  });

  it("patching an unknown id surfaces an API error", async () => {
    const { api } = setup();
    const { vm } = await loadSessionView(api, MANIFEST.session_id);
    await expect(
      submitAnnotationDecision(api, vm, { action: "confirm", id: "nope" }),
    ).rejects.toMatchObject({ status: 404 });
  });
});
