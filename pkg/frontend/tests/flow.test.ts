import { beforeEach, describe, expect, it } from "vitest";

import { NetworkError, StudyApi } from "../src/api.js";
import { FlowError, SessionFlow } from "../src/flow.js";
import { FakeServer, makeFixtureItems } from "./fakeServer.js";

describe("SessionFlow", () => {
  let server: FakeServer;
  let flow: SessionFlow;

  beforeEach(() => {
    server = new FakeServer(makeFixtureItems());
    flow = new SessionFlow(new StudyApi(server.fetch));
  });

  it("walks forward through every item into the questionnaire", async () => {
    await flow.open("study", "ann", "control");
    const seen: string[] = [];
    while (flow.phase === "item") {
      seen.push(`${flow.currentItem!.incident_id}/${flow.currentItem!.factor_id}`);
      await flow.decide(true);
    }
    expect(seen).toEqual([
      "inc-00000/alcohol_problem",
      "inc-00000/job_problem",
      "inc-00001/alcohol_problem",
    ]);
    expect(flow.phase).toBe("questionnaire");
    expect(server.decisions.length).toBe(3);
  });

  it("makes the previous item unreachable after a decision", async () => {
    await flow.open("study", "ann", "control");
    const first = flow.currentItem!;
    await flow.decide(false);
    expect(flow.currentItem).not.toBeNull();
    expect(
      `${flow.currentItem!.incident_id}/${flow.currentItem!.factor_id}`,
    ).not.toBe(`${first.incident_id}/${first.factor_id}`);
    // resubmitting the old item by hand is refused by the service and the
    // client holds no handle to re-render it
    const response = await server.fetch("/api/sessions/x/decision", {
      method: "POST",
      body: JSON.stringify({
        incident_id: first.incident_id,
        factor_id: first.factor_id,
        decision: true,
      }),
    });
    expect(response.status).toBe(409);
    expect(server.decisions.length).toBe(1);
  });

  it("keeps the chosen decision across a network retry without duplicating", async () => {
    await flow.open("study", "ann", "control");
    server.failNextDecisions = 1; // stored, but the ack is lost
    await expect(flow.decide(true)).rejects.toThrow(NetworkError);
    expect(flow.pendingDecision).not.toBeNull();
    expect(flow.pendingDecision!.decision).toBe(true);
    await flow.retryPending(); // hits duplicate_decision and advances
    expect(server.decisions.length).toBe(1);
    expect(server.decisions[0].decision).toBe(true);
    expect(flow.currentItem!.factor_id).toBe("job_problem");
  });

  it("refuses decisions outside the item phase", async () => {
    await expect(flow.decide(true)).rejects.toThrow(FlowError);
  });

  it("refuses questionnaire submission before the final item", async () => {
    await flow.open("study", "ann", "control");
    await expect(
      flow.submitQuestionnaire({ Q1: 1 }),
    ).rejects.toThrow(FlowError);
  });

  it("reaches done only after the questionnaire round-trips", async () => {
    await flow.open("study", "ann", "control");
    while (flow.phase === "item") {
      await flow.decide(false);
    }
    const answers = Object.fromEntries(
      Array.from({ length: 12 }, (_, i) => [`Q${i + 1}`, i < 6 || i >= 9 ? 3 : 1]),
    );
    await flow.submitQuestionnaire(answers);
    expect(flow.phase).toBe("done");
    expect(server.questionnaires.length).toBe(1);
  });

  it("rejects a second concurrent request", async () => {
    await flow.open("study", "ann", "control");
    const first = flow.decide(true);
    await expect(flow.decide(false)).rejects.toThrow(FlowError);
    await first;
  });
});
