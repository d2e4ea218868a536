#!/usr/bin/env node
/**
 * CLI entry: serve a backbone over the frame protocol.
 *
 *   bandsub-bridge [--host H] [--port P] [--model-path PATH] [--device DEV]
 *                  [--n-train N]
 *
 * Default address comes from $FBS_BRIDGE_ADDR (host:port) when set.
 */

import { createBackbone } from "./backbone.js";
import { serve } from "./server.js";

function parseArgs(argv: string[]): Map<string, string> {
  const out = new Map<string, string>();
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (!arg.startsWith("--")) throw new Error(`unexpected argument ${arg}`);
    const key = arg.slice(2);
    const value = argv[i + 1];
    if (value === undefined || value.startsWith("--")) throw new Error(`missing value for --${key}`);
    out.set(key, value);
    i++;
  }
  return out;
}

async function main(): Promise<number> {
  let args: Map<string, string>;
  try {
    args = parseArgs(process.argv.slice(2));
  } catch (err) {
    console.error(String(err instanceof Error ? err.message : err));
    return 1;
  }
  const envAddr = process.env.FBS_BRIDGE_ADDR;
  let host = "127.0.0.1";
  let port = 8765;
  if (envAddr) {
    const idx = envAddr.lastIndexOf(":");
    if (idx > 0) host = envAddr.slice(0, idx);
    port = Number(envAddr.slice(idx + 1));
  }
  host = args.get("host") ?? host;
  port = args.has("port") ? Number(args.get("port")) : port;
  const nTrain = args.has("n-train") ? Number(args.get("n-train")) : undefined;

  try {
    const backbone = createBackbone(args.get("model-path"), args.get("device") ?? "cpu",
                                    { nTrain });
    await serve(backbone, host, port, (line) => console.log(line));
    return 0;
  } catch (err) {
    console.error(String(err instanceof Error ? err.message : err));
    return 1;
  }
}

main().then((code) => {
  if (code !== 0) process.exitCode = code;
});
