/**
 * Browser entry point: wires the queue, verdict buffer, judgment mode and
 * dashboard into the page. The service origin comes from ?api=... or
 * defaults to the page origin.
 */

import { ApiClient } from "./api";
import { StatsDashboard } from "./dashboard";
import { JudgmentSession } from "./judgment";
import { ReviewSession } from "./session";
import { CLASS_ORDER } from "./types";
import { VerdictBuffer } from "./verdicts";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const base = params.get("api") ?? window.location.origin;
  const client = new ApiClient(base);
  const buffer = new VerdictBuffer((batch) => client.postVerdicts(batch));

  const queue = await client.getQueue();
  let review: ReviewSession | null = new ReviewSession(queue, buffer);
  let judgment: JudgmentSession | null = null;

  const image = el<HTMLImageElement>("snapshot");
  const label = el<HTMLElement>("pseudo-label");
  const progress = el<HTMLElement>("progress");
  const tally = el<HTMLElement>("tally");
  const badge = el<HTMLElement>("retry-badge");
  const summaryBox = el<HTMLElement>("judgment-summary");
  const statsBox = el<HTMLElement>("stats");
  const staleBadge = el<HTMLElement>("stale-badge");

  function render(): void {
    const active = judgment ?? review;
    const item = active?.current() ?? null;
    if (item !== null) {
      image.src = client.imageUrl(item);
      label.textContent = `${item.pseudo_label} (${item.confidence.toFixed(2)})`;
    } else {
      image.removeAttribute("src");
      label.textContent = judgment ? "audit complete" : "queue complete";
    }
    if (judgment !== null) {
      progress.textContent = `judgment ${judgment.position} of ${judgment.sample.length}`;
      const t = judgment.summary;
      summaryBox.textContent = CLASS_ORDER.map(
        (c) => `${c}: ${t.per_class[c].acceptable}/${t.per_class[c].refused}`,
      ).join("  ") + `  total: ${t.total.acceptable}/${t.total.refused}`;
    } else if (review !== null) {
      progress.textContent = `${review.position} of ${review.queue.length}`;
      tally.textContent = CLASS_ORDER.map((c) => `${c}: ${review!.tally[c]}`).join("  ");
      for (const url of review.prefetchWindow()) {
        new Image().src = `${base}${url}`;
      }
    }
    badge.style.display = buffer.retrying ? "inline" : "none";
    badge.textContent = buffer.retrying ? `retrying ${buffer.bufferedCount} verdicts` : "";
  }

  buffer.onChange = render;
  document.addEventListener("keydown", (event) => {
    const active = judgment ?? review;
    if (active?.handleKey(event.key)) {
      render();
    }
  });

  el<HTMLButtonElement>("judgment-toggle").addEventListener("click", () => {
    if (judgment === null) {
      const seed = Number(params.get("seed") ?? 1000);
      judgment = new JudgmentSession(queue, 1000, seed, buffer);
      if (judgment.shortfall > 0) {
        el<HTMLElement>("banner").textContent =
          `only ${judgment.sample.length} images available; auditing all of them`;
      }
      review = null;
    }
    render();
  });

  const dashboard = new StatsDashboard(client);
  dashboard.onUpdate = () => {
    const counts = dashboard.classCounts();
    statsBox.textContent = Object.entries(counts)
      .map(([cls, n]) => `${cls}: ${n}`)
      .join("  ");
    staleBadge.style.display = dashboard.isStale() ? "inline" : "none";
  };
  dashboard.start();

  window.addEventListener("beforeunload", () => void buffer.flush());
  render();
}

void boot();
