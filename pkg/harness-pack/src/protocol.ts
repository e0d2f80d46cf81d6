/**
 * Harness side of the line-delimited JSON wire protocol.
 *
 * One JSON object per line in each direction over stdin/stdout:
 *   orchestrator -> harness: init, learn, predict, llm_result, shutdown
 *   harness -> orchestrator: ready, ack, llm, prediction, state, error
 *
 * Protocol output is the only thing ever written to stdout; diagnostics
 * belong on stderr.
 */

import * as readline from "node:readline";

export interface TaskConfig {
  task_kind: string;
  dataset_id: string;
  label_set: string[] | null;
  instruction: string;
}

export interface Example {
  example_id: string;
  input_text: string;
  label: string | null;
}

export interface ChatMessage {
  role: "system" | "user" | "assistant";
  content: string;
}

export interface LlmResult {
  content: string;
  prompt_tokens: number;
  completion_tokens: number;
}

export interface Harness {
  onInit(config: TaskConfig): void;
  /** Returns a state summary to log, or null to stay silent. */
  onLearn(example: Example): string | null;
  onPredict(query: Example, llm: LlmClient): Promise<Prediction> | Prediction;
  onShutdown?(): void;
}

export interface Prediction {
  label: string;
  aux: unknown;
}

export class LlmClient {
  private nextRequestId = 0;

  constructor(private readonly server: HarnessServer) {}

  async complete(
    messages: ChatMessage[],
    maxOutputTokens = 512,
    temperature = 0.0,
  ): Promise<LlmResult> {
    const requestId = this.nextRequestId++;
    this.server.emit({
      type: "llm",
      request_id: requestId,
      messages,
      max_output_tokens: maxOutputTokens,
      temperature,
    });
    const reply = await this.server.nextMessage();
    if (reply === null || reply.type !== "llm_result" || reply.request_id !== requestId) {
      throw new Error(`expected llm_result for request ${requestId}, got ${JSON.stringify(reply)}`);
    }
    return {
      content: String(reply.content ?? ""),
      prompt_tokens: Number(reply.prompt_tokens ?? 0),
      completion_tokens: Number(reply.completion_tokens ?? 0),
    };
  }
}

type Message = { type: string; [key: string]: unknown };

export class HarnessServer {
  private readonly queue: Message[] = [];
  private waiter: ((message: Message | null) => void) | null = null;
  private closed = false;

  constructor(private readonly harness: Harness) {}

  emit(message: Message): void {
    process.stdout.write(JSON.stringify(message) + "\n");
  }

  nextMessage(): Promise<Message | null> {
    if (this.queue.length > 0) {
      return Promise.resolve(this.queue.shift()!);
    }
    if (this.closed) {
      return Promise.resolve(null);
    }
    return new Promise((resolve) => {
      this.waiter = resolve;
    });
  }

  private push(message: Message | null): void {
    if (this.waiter) {
      const waiter = this.waiter;
      this.waiter = null;
      waiter(message);
    } else if (message !== null) {
      this.queue.push(message);
    }
  }

  async run(): Promise<number> {
    const rl = readline.createInterface({ input: process.stdin, terminal: false });
    rl.on("line", (line) => {
      const text = line.trim();
      if (!text) return;
      try {
        this.push(JSON.parse(text) as Message);
      } catch {
        this.emit({ type: "error", message: `undecodable input line: ${text.slice(0, 80)}` });
        process.exitCode = 1;
        rl.close();
      }
    });
    rl.on("close", () => {
      this.closed = true;
      this.push(null);
    });

    for (;;) {
      const message = await this.nextMessage();
      if (message === null) return 0; // orchestrator went away
      try {
        switch (message.type) {
          case "init":
            this.harness.onInit(message.task_config as TaskConfig);
            this.emit({ type: "ready" });
            break;
          case "learn": {
            const summary = this.harness.onLearn(message.example as Example);
            if (summary !== null) {
              this.emit({ type: "state", payload: summary });
            }
            this.emit({ type: "ack" });
            break;
          }
          case "predict": {
            const query = message.query as Example;
            const prediction = await this.harness.onPredict(query, new LlmClient(this));
            this.emit({
              type: "prediction",
              query_id: message.query_id ?? query.example_id,
              label: prediction.label,
              aux: prediction.aux ?? null,
            });
            break;
          }
          case "shutdown":
            this.harness.onShutdown?.();
            return 0;
          default:
            this.emit({ type: "error", message: `unknown message type ${String(message.type)}` });
            return 1;
        }
      } catch (err) {
        this.emit({ type: "error", message: err instanceof Error ? err.message : String(err) });
        return 1;
      }
    }
  }
}

export function serve(harness: Harness): void {
  new HarnessServer(harness)
    .run()
    .then((code) => process.exit(code))
    .catch((err) => {
      console.error(err);
      process.exit(1);
    });
}
