// Chat client for the chatgan inference service. One in-flight request per
// session; health polling gates the composer; the transcript is append-only.

export type Author = "user" | "bot" | "system";

export interface UiMessage {
  author: Author;
  text: string;
  timestamp: number;
  latencyMs?: number;
  tokens?: number;
  pending: boolean;
}

export interface ChatOptions {
  baseUrl: string;
  fetchFn?: typeof fetch;
  pollIntervalMs?: number;
  requestTimeoutMs?: number;
  sessionId?: string;
}

interface ChatResponse {
  answer: string;
  tokens: number;
  latency_ms: number;
}

function freshSessionId(): string {
  // fresh per page load; reloading starts a new session
  return "tab-" + Math.random().toString(36).slice(2, 12);
}

export class ChatApp {
  readonly sessionId: string;
  readonly messages: UiMessage[] = [];
  healthy = false;
  inFlight = false;

  private baseUrl: string;
  private readonly fetchFn: typeof fetch;
  private readonly pollIntervalMs: number;
  private readonly requestTimeoutMs: number;
  private pollTimer: ReturnType<typeof setInterval> | null = null;

  private readonly statusDot: HTMLElement;
  private readonly banner: HTMLElement;
  private readonly settingsPane: HTMLElement;
  private readonly baseUrlInput: HTMLInputElement;
  private readonly messagesEl: HTMLElement;
  private readonly form: HTMLFormElement;
  private readonly input: HTMLInputElement;
  private readonly sendBtn: HTMLButtonElement;

  constructor(private readonly root: HTMLElement, options: ChatOptions) {
    this.baseUrl = options.baseUrl.replace(/\/+$/, "");
    this.fetchFn = options.fetchFn ?? fetch.bind(globalThis);
    this.pollIntervalMs = options.pollIntervalMs ?? 10_000;
    this.requestTimeoutMs = options.requestTimeoutMs ?? 30_000;
    this.sessionId = options.sessionId ?? freshSessionId();

    root.innerHTML = `
      <header class="topbar">
        <span class="status-dot red" title="service status"></span>
        <span class="title">chatgan</span>
        <button type="button" class="settings-toggle">settings</button>
      </header>
      <div class="reload-banner" hidden>model reloading…</div>
      <div class="settings" hidden>
        <label>API base
          <input class="base-url" spellcheck="false">
        </label>
      </div>
      <main class="messages"></main>
      <form class="composer">
        <input class="composer-input" placeholder="say something…" autocomplete="off">
        <button class="send-btn" type="submit" disabled>send</button>
      </form>`;

    this.statusDot = root.querySelector(".status-dot") as HTMLElement;
    this.banner = root.querySelector(".reload-banner") as HTMLElement;
    this.settingsPane = root.querySelector(".settings") as HTMLElement;
    this.baseUrlInput = root.querySelector(".base-url") as HTMLInputElement;
    this.messagesEl = root.querySelector(".messages") as HTMLElement;
    this.form = root.querySelector(".composer") as HTMLFormElement;
    this.input = root.querySelector(".composer-input") as HTMLInputElement;
    this.sendBtn = root.querySelector(".send-btn") as HTMLButtonElement;

    this.baseUrlInput.value = this.baseUrl;
    this.baseUrlInput.addEventListener("change", () => {
      this.setBaseUrl(this.baseUrlInput.value);
    });
    (root.querySelector(".settings-toggle") as HTMLElement).addEventListener(
      "click", () => { this.settingsPane.hidden = !this.settingsPane.hidden; });
    this.input.addEventListener("input", () => this.refreshComposer());
    this.form.addEventListener("submit", (ev) => {
      ev.preventDefault();
      void this.send(this.input.value);
    });
  }

  start(): void {
    void this.pollHealth();
    this.pollTimer = setInterval(() => void this.pollHealth(), this.pollIntervalMs);
  }

  stop(): void {
    if (this.pollTimer !== null) {
      clearInterval(this.pollTimer);
      this.pollTimer = null;
    }
  }

  setBaseUrl(url: string): void {
    this.baseUrl = url.trim().replace(/\/+$/, "");
    this.baseUrlInput.value = this.baseUrl;
    void this.pollHealth();
  }

  getBaseUrl(): string {
    return this.baseUrl;
  }

  private timedFetch(path: string, init?: RequestInit): Promise<Response> {
    const controller = new AbortController();
    const timer = setTimeout(() => controller.abort(), this.requestTimeoutMs);
    return this.fetchFn(this.baseUrl + path, { ...init, signal: controller.signal })
      .finally(() => clearTimeout(timer));
  }

  async pollHealth(): Promise<void> {
    let ok = false;
    try {
      const res = await this.timedFetch("/health");
      ok = res.status === 200;
    } catch {
      ok = false; // unreachable or timed out counts as red
    }
    this.healthy = ok;
    this.statusDot.classList.toggle("green", ok);
    this.statusDot.classList.toggle("red", !ok);
    if (ok) this.banner.hidden = true;
    this.refreshComposer();
  }

  canSend(text: string): boolean {
    return this.healthy && !this.inFlight && text.trim().length > 0;
  }

  private refreshComposer(): void {
    this.sendBtn.disabled = !this.canSend(this.input.value);
    this.input.classList.toggle("waiting", this.inFlight);
  }

  private append(message: UiMessage): HTMLElement {
    this.messages.push(message);
    const el = document.createElement("div");
    el.className = `msg msg-${message.author}` + (message.pending ? " pending" : "");
    this.renderInto(el, message);
    this.messagesEl.appendChild(el);
    this.messagesEl.scrollTop = this.messagesEl.scrollHeight;
    return el;
  }

  private renderInto(el: HTMLElement, message: UiMessage): void {
    el.textContent = "";
    const body = document.createElement("span");
    body.className = "body";
    body.textContent = message.pending ? "…" : message.text;
    el.appendChild(body);
    if (!message.pending && message.author === "bot" && message.latencyMs !== undefined) {
      const badge = document.createElement("span");
      badge.className = "badge";
      badge.textContent = `${Math.round(message.latencyMs)} ms · ${message.tokens} tokens`;
      el.appendChild(badge);
    }
  }

  private resolvePending(el: HTMLElement, message: UiMessage,
                         patch: Partial<UiMessage>): void {
    Object.assign(message, patch, { pending: false });
    el.className = `msg msg-${message.author}`;
    this.renderInto(el, message);
  }

  private appendRetry(el: HTMLElement, text: string): void {
    const btn = document.createElement("button");
    btn.type = "button";
    btn.className = "retry-btn";
    btn.textContent = "retry";
    btn.addEventListener("click", () => {
      btn.disabled = true;
      void this.send(text);
    });
    el.appendChild(btn);
  }

  async send(text: string): Promise<void> {
    if (!this.canSend(text)) return;
    const trimmed = text.trim();
    this.inFlight = true;
    this.input.value = "";
    this.append({ author: "user", text: trimmed, timestamp: Date.now(), pending: false });
    const pendingMsg: UiMessage = {
      author: "bot", text: "", timestamp: Date.now(), pending: true,
    };
    const pendingEl = this.append(pendingMsg);
    this.refreshComposer();
    try {
      const res = await this.timedFetch("/chat", {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ session_id: this.sessionId, message: trimmed }),
      });
      if (res.status === 200) {
        const reply = (await res.json()) as ChatResponse;
        this.resolvePending(pendingEl, pendingMsg, {
          text: reply.answer, latencyMs: reply.latency_ms, tokens: reply.tokens,
        });
      } else if (res.status === 503) {
        this.banner.hidden = false;
        this.resolvePending(pendingEl, pendingMsg, {
          author: "system", text: "model reloading, try again shortly",
        });
        this.appendRetry(pendingEl, trimmed);
      } else {
        const detail = await res.text().catch(() => "");
        this.resolvePending(pendingEl, pendingMsg, {
          author: "system", text: `server error ${res.status} ${detail}`.trim(),
        });
        this.appendRetry(pendingEl, trimmed);
      }
    } catch {
      this.resolvePending(pendingEl, pendingMsg, {
        author: "system", text: "could not reach the server",
      });
      this.appendRetry(pendingEl, trimmed);
    } finally {
      this.inFlight = false;
      this.refreshComposer();
    }
  }
}
