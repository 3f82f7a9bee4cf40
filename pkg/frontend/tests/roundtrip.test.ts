/**
 * End-to-end acceptance: a scripted 50-item review session against the real
 * Python service, routed through a proxy that injects one 500 response.
 * All 50 verdicts must be server-acknowledged, the client judgment summary
 * must equal the server's recomputation byte for byte, and the injected
 * failure must cause no loss.
 */

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import http from "node:http";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api";
import { JudgmentSession } from "../src/judgment";
import { CLASS_ORDER, type Stats } from "../src/types";
import { VerdictBuffer } from "../src/verdicts";

const PER_CLASS: Record<string, { total: number; refused: number }> = {
  dry: { total: 20, refused: 2 },
  wet: { total: 10, refused: 3 },
  snow: { total: 8, refused: 1 },
  offline: { total: 6, refused: 0 },
  poor: { total: 6, refused: 2 },
};

let python: ChildProcess;
let proxy: http.Server;
let serviceUrl = "";
let proxyUrl = "";
let injectedFailures = 0;

function buildRunFile(dir: string): string {
  const entries = [];
  for (const cls of CLASS_ORDER) {
    for (let i = 0; i < PER_CLASS[cls].total; i++) {
      entries.push({ image_ref: `${cls}-${i}.png`, label: cls, confidence: 0.9 });
    }
  }
  const path = join(dir, "run.json");
  writeFileSync(path, JSON.stringify({ backend: "audit", scheme: "five_class", entries, failed: [] }));
  return path;
}

function startService(runPath: string): Promise<string> {
  return new Promise((resolve, reject) => {
    python = spawn("python3", ["-u", "-m", "roadwatch.cli", "serve", "--run", runPath, "--port", "0"], {
      stdio: ["ignore", "pipe", "pipe"],
    });
    let out = "";
    python.stdout!.on("data", (chunk: Buffer) => {
      out += chunk.toString();
      const match = out.match(/api listening on port (\d+)/);
      if (match) {
        resolve(`http://127.0.0.1:${match[1]}`);
      }
    });
    python.stderr!.on("data", () => {});
    python.on("exit", (code) => reject(new Error(`service exited early (${code}): ${out}`)));
    setTimeout(() => reject(new Error(`service did not start: ${out}`)), 15_000);
  });
}

/** Forwarding proxy that answers the second verdict POST with a 500. */
function startProxy(target: string): Promise<string> {
  let verdictPosts = 0;
  proxy = http.createServer((req, res) => {
    const chunks: Buffer[] = [];
    req.on("data", (c: Buffer) => chunks.push(c));
    req.on("end", async () => {
      if (req.method === "POST" && req.url === "/api/verdicts") {
        verdictPosts += 1;
        if (verdictPosts === 2) {
          injectedFailures += 1;
          res.writeHead(500, { "Content-Type": "application/json" });
          res.end(JSON.stringify({ error: "injected failure" }));
          return;
        }
      }
      try {
        const upstream = await fetch(`${target}${req.url}`, {
          method: req.method,
          headers: { "Content-Type": req.headers["content-type"] ?? "application/json" },
          body: chunks.length > 0 ? Buffer.concat(chunks) : undefined,
        });
        const body = Buffer.from(await upstream.arrayBuffer());
        res.writeHead(upstream.status, {
          "Content-Type": upstream.headers.get("content-type") ?? "application/json",
        });
        res.end(body);
      } catch (error) {
        res.writeHead(502);
        res.end(String(error));
      }
    });
  });
  return new Promise((resolve) => {
    proxy.listen(0, "127.0.0.1", () => {
      const address = proxy.address();
      if (address && typeof address === "object") {
        resolve(`http://127.0.0.1:${address.port}`);
      }
    });
  });
}

async function waitFor(predicate: () => boolean, timeoutMs = 20_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    if (predicate()) return;
    await new Promise((resolve) => setTimeout(resolve, 25));
  }
  throw new Error("condition not met in time");
}

beforeAll(async () => {
  const dir = mkdtempSync(join(tmpdir(), "roadwatch-ui-"));
  serviceUrl = await startService(buildRunFile(dir));
  proxyUrl = await startProxy(serviceUrl);
}, 30_000);

afterAll(() => {
  python?.kill();
  proxy?.close();
});

describe("scripted 50-item session against the live service", () => {
  it("acks all verdicts, matches the server summary, survives a 500", async () => {
    const client = new ApiClient(proxyUrl);
    const queue = await client.getQueue();
    expect(queue).toHaveLength(50);

    const buffer = new VerdictBuffer((batch) => client.postVerdicts(batch), {
      flushEvery: 10,
      flushAfterMs: 200,
      retryBaseMs: 100,
    });
    const session = new JudgmentSession(queue, 50, 7, buffer);
    expect(session.sample).toHaveLength(50);

    // Script: refuse the configured count per class, accept the rest.
    const refusedLeft = Object.fromEntries(
      Object.entries(PER_CLASS).map(([cls, cfg]) => [cls, cfg.refused]),
    );
    let presses = 0;
    while (!session.done) {
      const item = session.current()!;
      if (refusedLeft[item.pseudo_label] > 0) {
        refusedLeft[item.pseudo_label] -= 1;
        session.handleKey("r");
      } else {
        session.handleKey("a");
      }
      presses += 1;
    }
    expect(presses).toBe(50);

    await buffer.flush();
    await waitFor(() => buffer.ackedCount === 50);
    expect(injectedFailures).toBe(1); // the fault actually fired
    expect(buffer.bufferedCount).toBe(0); // and nothing was lost

    const stats = (await client.getStats()) as Stats;
    expect(stats.verdicts_applied).toBe(50);
    expect(session.canonicalSummary()).toBe(stats.judgment_canonical);
    expect(session.summary.total).toEqual({ acceptable: 42, refused: 8 });
  }, 30_000);
});
