import { spawn } from "node:child_process";
import { createInterface } from "node:readline";
import { describe, expect, it } from "vitest";

import { decodeLogprobs } from "../src/formats.js";
import { handleRequestLine } from "../src/protocol.js";
import { testModel, testModelPath } from "./helpers.js";

const model = testModel();

describe("request handling", () => {
  it("answers dist with the model's log-probabilities", () => {
    const response = JSON.parse(handleRequestLine(model, '{"id":7,"op":"dist","prefix":[3,1]}'));
    expect(response.id).toBe(7);
    const got = decodeLogprobs(response.logprobs, model.vocabSize);
    expect(Array.from(got)).toEqual(Array.from(model.nextLogprobs([3, 1])));
  });

  it("answers score with the chained log-probability", () => {
    const response = JSON.parse(
      handleRequestLine(model, '{"id":8,"op":"score","prefix":[3],"cont":[5,2]}'),
    );
    expect(response.id).toBe(8);
    expect(response.logprob).toBeCloseTo(model.score([3], [5, 2]), 10);
  });

  it("score of one token equals the dist vector entry", () => {
    const dist = JSON.parse(handleRequestLine(model, '{"id":1,"op":"dist","prefix":[4]}'));
    const logprobs = decodeLogprobs(dist.logprobs, model.vocabSize);
    const score = JSON.parse(
      handleRequestLine(model, '{"id":2,"op":"score","prefix":[4],"cont":[9]}'),
    );
    expect(score.logprob).toBe(logprobs[9]);
  });

  it("reports errors with the matching id", () => {
    const bad = JSON.parse(handleRequestLine(model, '{"id":42,"op":"dist","prefix":[99999]}'));
    expect(bad.id).toBe(42);
    expect(bad.error).toMatch(/out-of-range/);
    const unknown = JSON.parse(handleRequestLine(model, '{"id":43,"op":"wat"}'));
    expect(unknown.id).toBe(43);
    expect(unknown.error).toMatch(/unknown op/);
  });

  it("survives unparseable lines", () => {
    const response = JSON.parse(handleRequestLine(model, "certainly not json"));
    expect(response.id).toBe(-1);
    expect(typeof response.error).toBe("string");
  });
});

describe("served subprocess", () => {
  it("answers over stdio and outlives malformed requests", async () => {
    const child = spawn("node", ["dist/cli.js", "serve", "--model", testModelPath()], {
      cwd: new URL("..", import.meta.url).pathname,
      stdio: ["pipe", "pipe", "ignore"],
    });
    const lines = createInterface({ input: child.stdout });
    const pending: ((line: string) => void)[] = [];
    lines.on("line", (line) => pending.shift()?.(line));
    const ask = (request: string): Promise<string> =>
      new Promise((resolve) => {
        pending.push(resolve);
        child.stdin.write(request + "\n");
      });

    const dist = JSON.parse(await ask('{"id":1,"op":"dist","prefix":[0,3]}'));
    expect(decodeLogprobs(dist.logprobs, model.vocabSize)).toEqual(
      model.nextLogprobs([0, 3]),
    );

    const broken = JSON.parse(await ask("{{{{"));
    expect(broken.error).toBeTruthy();

    // the stream is still alive after the error
    const score = JSON.parse(await ask('{"id":2,"op":"score","prefix":[],"cont":[11]}'));
    expect(score.logprob).toBeCloseTo(model.nextLogprobs([])[11], 10);

    child.stdin.end();
    await new Promise((resolve) => child.on("exit", resolve));
  });
});
