// Live round trip against a running service. Gated by env:
//   MOTIONWEAVE_SERVICE_URL=http://127.0.0.1:8080 npm run test:integration

import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { boneSegments, defaultViewport } from "../src/player.js";
import {
  composeAndGenerate,
  initialState,
  withCandidates,
  withCompare,
  withDescription,
  withHistoryEntry,
  withMultiplier,
  withParse,
  withSeed,
} from "../src/state.js";

const serviceUrl = process.env.MOTIONWEAVE_SERVICE_URL;
const describeLive = serviceUrl ? describe : describe.skip;

describeLive("live service", () => {
  const client = new ApiClient(serviceUrl!);
  const text = "a person walks forward and jumps";

  it("completes the compose-and-generate loop", async () => {
    let state = withDescription(initialState(), text);
    const parsed = await client.parse(text);
    state = withParse(state, parsed);
    expect(state.actions.length).toBeGreaterThanOrEqual(1);

    for (let i = 0; i < state.actions.length; i++) {
      const res = await client.sampleActions(
        state.actions[i]!.description, 2, [6, 6], 30);
      expect(res.candidates).toHaveLength(2);
      state = withCandidates(state, i, res.candidates);
    }
    state = withSeed(state, 11);
    state = { ...state, steps: [8, 8, 8] };

    const outcome = await composeAndGenerate(client, state);
    expect(outcome.motion.n_frames).toBeGreaterThan(0);
    expect(outcome.motion.positions).toHaveLength(outcome.motion.n_frames);
    expect(outcome.state.history).toHaveLength(1);
  }, 120_000);

  it("multiplier 0 on every slider reproduces the unguided motion", async () => {
    let state = withDescription(initialState(), text);
    state = withParse(state, await client.parse(text));
    state = withSeed(state, 21);
    state = { ...state, steps: [8, 8, 8] };
    for (let i = 0; i < state.actions.length; i++) {
      state = withMultiplier(state, i, 0);
    }
    const zeroed = await composeAndGenerate(client, state);

    const unguided = await client.generate({
      text, rho: 0.0, seed: 21, steps: [8, 8, 8], sync: true,
    });
    expect(unguided.status).toBe("done");
    const reference = await client.getMotion(unguided.result!.motion_id);
    expect(zeroed.motion.features).toEqual(reference.features);
    expect(zeroed.motion.positions).toEqual(reference.positions);
  }, 120_000);

  it("renders two history entries side by side", async () => {
    let state = withDescription(initialState(), text);
    state = withParse(state, await client.parse(text));
    state = { ...state, steps: [6, 6, 6] };

    state = withSeed(state, 1);
    const first = await composeAndGenerate(client, state);
    state = withSeed(first.state, 2);
    const second = await composeAndGenerate(client, state);
    state = second.state;
    expect(state.history).toHaveLength(2);

    state = withCompare(state, 1, 2);
    const viewport = defaultViewport(260, 260);
    const motions = [first.motion, second.motion];
    const rendered = motions.map((m) => boneSegments(m, 0, viewport));
    expect(rendered[0]!.length).toBeGreaterThan(0);
    expect(rendered[1]!.length).toBeGreaterThan(0);
    expect(first.motion.positions).not.toEqual(second.motion.positions);
  }, 180_000);
});
