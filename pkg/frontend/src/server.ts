/**
 * Frame-protocol server wrapping a backbone. One session at a time, strictly
 * serialized request handling: every request frame gets exactly one response
 * frame, in order. Malformed input earns a protocol_error response and the
 * connection stays open; backbone exceptions earn a remote_error response
 * with the message passed through.
 */

import * as net from "node:net";

import { Backbone } from "./backbone.js";
import {
  Dtype, Frame, FrameDecoder, FrameHeader,
  encodeFrame, isFinitePayload, packPayload, unpackPayload,
} from "./protocol.js";

const TENSOR_OPS = new Set(["predict_eps", "encode", "decode"]);

function protocolError(op: string | undefined, message: string): Buffer {
  return encodeFrame({ op: op ?? "unknown", status: "protocol_error", message });
}

function remoteError(op: string | undefined, message: string): Buffer {
  return encodeFrame({ op: op ?? "unknown", status: "remote_error", message });
}

function validShape(shape: unknown): shape is number[] {
  return Array.isArray(shape) && shape.length === 3 &&
    shape.every((v) => Number.isInteger(v) && v >= 1);
}

/** Handles one session's frames; exported for direct in-process testing. */
export class Session {
  private handshaken = false;

  constructor(private readonly backbone: Backbone) {}

  /** One request frame in, one response frame out. */
  handle(frame: Frame): { response: Buffer; close: boolean } {
    const header = frame.header;
    const op = typeof header.op === "string" ? header.op : undefined;
    if (op === "handshake") {
      this.handshaken = true;
      return {
        response: encodeFrame({
          op, status: "ok",
          n_train: this.backbone.nTrain,
          alpha_bar: Array.from(this.backbone.alphaBar),
        }),
        close: false,
      };
    }
    if (op === "shutdown") {
      return { response: encodeFrame({ op, status: "ok" }), close: true };
    }
    if (op === undefined || !TENSOR_OPS.has(op)) {
      return { response: protocolError(op, `unknown op ${JSON.stringify(header.op)}`), close: false };
    }
    if (!this.handshaken) {
      return { response: protocolError(op, "handshake required before tensor ops"), close: false };
    }
    if (!validShape(header.shape)) {
      return { response: protocolError(op, `bad shape ${JSON.stringify(header.shape)}`), close: false };
    }
    const dtype = header.dtype === "f32" ? "f32" : header.dtype === "f64" ? "f64" : null;
    if (dtype === null) {
      return { response: protocolError(op, `bad dtype ${JSON.stringify(header.dtype)}`), close: false };
    }
    let values: Float64Array;
    try {
      values = unpackPayload(frame.payload, header.shape, dtype as Dtype);
    } catch (err) {
      return { response: protocolError(op, String(err instanceof Error ? err.message : err)), close: false };
    }
    if (!isFinitePayload(values)) {
      return { response: protocolError(op, "payload contains non-finite values"), close: false };
    }

    try {
      let outValues: Float64Array;
      let outShape: number[];
      if (op === "predict_eps") {
        outValues = this.backbone.predictEps(
          values, header.shape, header.timestep ?? -1, header.cond ?? "");
        outShape = header.shape;
      } else if (op === "encode") {
        ({ values: outValues, shape: outShape } = this.backbone.encode(values, header.shape));
      } else {
        ({ values: outValues, shape: outShape } = this.backbone.decode(values, header.shape));
      }
      // f32 on the wire: backbone-native precision, widened by the client
      const response: FrameHeader = { op, status: "ok", shape: outShape, dtype: "f32" };
      return { response: encodeFrame(response, packPayload(outValues, "f32")), close: false };
    } catch (err) {
      return { response: remoteError(op, String(err instanceof Error ? err.message : err)), close: false };
    }
  }
}

export interface ServerHandle {
  address: { host: string; port: number };
  close(): Promise<void>;
}

export function serve(backbone: Backbone, host: string, port: number,
                      onLog: (line: string) => void = () => {}): Promise<ServerHandle> {
  const server = net.createServer({ noDelay: true });
  let busy = false;

  server.on("connection", (socket) => {
    if (busy) {
      // single-session contract: no multi-client serving
      socket.destroy();
      return;
    }
    busy = true;
    const session = new Session(backbone);
    const decoder = new FrameDecoder();
    let closing = false;

    socket.on("data", (chunk) => {
      decoder.push(Buffer.isBuffer(chunk) ? chunk : Buffer.from(chunk));
      while (!closing) {
        let frame: Frame | null;
        try {
          frame = decoder.next();
        } catch (err) {
          socket.write(protocolError(undefined, String(err instanceof Error ? err.message : err)));
          continue;
        }
        if (frame === null) break;
        const { response, close } = session.handle(frame);
        socket.write(response);
        if (close) {
          closing = true;
          socket.end();
          server.close();
        }
      }
    });
    socket.on("close", () => {
      busy = false;
    });
    socket.on("error", () => socket.destroy());
  });

  return new Promise((resolve, reject) => {
    server.once("error", reject);
    server.listen(port, host, () => {
      const addr = server.address() as net.AddressInfo;
      onLog(`listening on ${addr.address}:${addr.port}`);
      resolve({
        address: { host: addr.address, port: addr.port },
        close: () => new Promise((done) => server.close(() => done())),
      });
    });
  });
}
