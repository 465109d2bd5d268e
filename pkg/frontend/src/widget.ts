/**
 * Embeddable chat widget for the firmbot HTTP API.
 *
 * Plain DOM, no framework. Mount it into any container:
 *
 *   <div id="chat"></div>
 *   <script type="module">
 *     import { initWidget } from "./widget.js";
 *     initWidget({ baseUrl: "http://127.0.0.1:8080", container: document.getElementById("chat") });
 *   </script>
 *
 * One request is in flight at a time: the input is disabled while the bot
 * is replying, every entry of the server's messages[] renders as its own
 * bubble in order, and quick-reply buttons send their value as a user turn.
 */

export interface WidgetConfig {
  baseUrl: string;
  container: HTMLElement;
}

export interface ChoiceButton {
  label: string;
  value: string;
}

export interface BotReply {
  messages: string[];
  buttons?: ChoiceButton[];
  end_of_flow: boolean;
}

export interface Bubble {
  role: "user" | "bot" | "error";
  text: string;
}

export interface WidgetState {
  sessionId: string | null;
  transcript: Bubble[];
  pending: boolean;
  buttons: ChoiceButton[] | null;
}

class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function requestJson(url: string, init?: RequestInit): Promise<any> {
  const response = await fetch(url, {
    headers: { "content-type": "application/json" },
    ...init,
  });
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = await response.json();
      detail = body?.error?.message ?? detail;
    } catch {
      /* non-JSON error body */
    }
    throw new ApiError(response.status, detail);
  }
  if (response.status === 204) return null;
  return response.json();
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export class ChatWidget {
  readonly state: WidgetState = {
    sessionId: null,
    transcript: [],
    pending: false,
    buttons: null,
  };

  private readonly baseUrl: string;
  private readonly root: HTMLElement;
  private readonly banner: HTMLElement;
  private readonly messagesBox: HTMLElement;
  private readonly buttonsBox: HTMLElement;
  private readonly form: HTMLFormElement;
  private readonly input: HTMLInputElement;
  private readonly sendButton: HTMLButtonElement;

  constructor(config: WidgetConfig) {
    this.baseUrl = config.baseUrl.replace(/\/+$/, "");
    this.root = el("div", "firmbot-widget");
    this.banner = el("div", "firmbot-banner");
    this.banner.hidden = true;
    this.messagesBox = el("div", "firmbot-messages");
    this.buttonsBox = el("div", "firmbot-buttons");
    this.form = el("form", "firmbot-form");
    this.input = el("input", "firmbot-input");
    this.input.type = "text";
    this.input.placeholder = "Type your message…";
    this.sendButton = el("button", "firmbot-send", "Send");
    this.sendButton.type = "submit";
    this.form.append(this.input, this.sendButton);
    this.root.append(this.banner, this.messagesBox, this.buttonsBox, this.form);
    config.container.appendChild(this.root);

    this.form.addEventListener("submit", (event) => {
      event.preventDefault();
      const text = this.input.value.trim();
      if (!text) return;
      this.input.value = "";
      void this.send(text);
    });
  }

  get element(): HTMLElement {
    return this.root;
  }

  /** Create the server session; on failure show a retry banner. */
  async connect(): Promise<boolean> {
    this.banner.hidden = true;
    try {
      const created = await requestJson(`${this.baseUrl}/v1/sessions`, { method: "POST" });
      this.state.sessionId = created.session_id;
      return true;
    } catch (error) {
      this.showRetryBanner(error);
      return false;
    }
  }

  /** Send one user turn (typed text or a button value). */
  async send(text: string): Promise<void> {
    if (this.state.pending) return; // single in-flight request
    this.setPending(true);
    this.clearButtons(); // any user action dismisses the current choices
    this.addBubble("user", text);
    try {
      const reply = await this.postMessage(text);
      for (const message of reply.messages) {
        this.addBubble("bot", message);
      }
      if (reply.buttons && reply.buttons.length > 0) {
        this.renderButtons(reply.buttons);
      }
    } catch (error) {
      this.addBubble("error", `Something went wrong (${describe(error)}). Please try again.`);
    } finally {
      this.setPending(false);
    }
  }

  private async postMessage(text: string): Promise<BotReply> {
    if (this.state.sessionId === null) {
      await this.requireSession();
    }
    try {
      return await this.postOnce(text);
    } catch (error) {
      if (error instanceof ApiError && error.status === 404) {
        // session expired server-side: transparently start a new one
        this.state.sessionId = null;
        await this.requireSession();
        return this.postOnce(text);
      }
      throw error;
    }
  }

  private async requireSession(): Promise<void> {
    const created = await requestJson(`${this.baseUrl}/v1/sessions`, { method: "POST" });
    this.state.sessionId = created.session_id;
  }

  private postOnce(text: string): Promise<BotReply> {
    return requestJson(`${this.baseUrl}/v1/sessions/${this.state.sessionId}/messages`, {
      method: "POST",
      body: JSON.stringify({ text }),
    });
  }

  private addBubble(role: Bubble["role"], text: string): void {
    this.state.transcript.push({ role, text });
    const bubble = el("div", `firmbot-bubble firmbot-bubble--${role}`, text);
    this.messagesBox.appendChild(bubble);
    this.messagesBox.scrollTop = this.messagesBox.scrollHeight;
  }

  private renderButtons(buttons: ChoiceButton[]): void {
    this.state.buttons = buttons;
    for (const choice of buttons) {
      const button = el("button", "firmbot-choice", choice.label);
      button.type = "button";
      button.addEventListener("click", () => {
        void this.send(choice.value);
      });
      this.buttonsBox.appendChild(button);
    }
  }

  private clearButtons(): void {
    this.state.buttons = null;
    this.buttonsBox.replaceChildren();
  }

  private setPending(pending: boolean): void {
    this.state.pending = pending;
    this.input.disabled = pending;
    this.sendButton.disabled = pending;
    for (const button of this.buttonsBox.querySelectorAll("button")) {
      button.disabled = pending;
    }
  }

  private showRetryBanner(error: unknown): void {
    this.banner.hidden = false;
    this.banner.replaceChildren();
    this.banner.append(el("span", "firmbot-banner-text", `Cannot reach the chat service (${describe(error)}). `));
    const retry = el("button", "firmbot-retry", "Retry");
    retry.type = "button";
    retry.addEventListener("click", () => {
      void this.connect();
    });
    this.banner.appendChild(retry);
  }
}

function describe(error: unknown): string {
  if (error instanceof ApiError) return `HTTP ${error.status}`;
  if (error instanceof Error) return error.message;
  return String(error);
}

/** Mount a widget and connect it; the returned instance is ready to chat. */
export async function initWidget(config: WidgetConfig): Promise<ChatWidget> {
  const widget = new ChatWidget(config);
  await widget.connect();
  return widget;
}

declare global {
  interface Window {
    FirmbotChat?: { init: typeof initWidget };
  }
}

if (typeof window !== "undefined") {
  window.FirmbotChat = { init: initWidget };
}
