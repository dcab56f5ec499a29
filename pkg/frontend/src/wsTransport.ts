// Browser transport: WebSocket carrying newline-terminated JSON lines.
// The server may batch several lines into one ws message, so inbound
// data is re-split on newlines before the session sees it.

import { Transport } from "./session.js";

export function wsTransport(url: string): Promise<Transport> {
  return new Promise((resolve, reject) => {
    const ws = new WebSocket(url);
    let lineCb: (line: string) => void = () => {};
    let closeCb: () => void = () => {};
    let buffer = "";

    ws.onopen = () => {
      resolve({
        send: (line) => ws.send(line),
        backlog: () => ws.bufferedAmount,
        onLine: (cb) => { lineCb = cb; },
        onClose: (cb) => { closeCb = cb; },
        close: () => ws.close(),
      });
    };
    ws.onerror = () => reject(new Error(`cannot reach ${url}`));
    ws.onmessage = (ev) => {
      buffer += typeof ev.data === "string" ? ev.data : "";
      let nl;
      while ((nl = buffer.indexOf("\n")) >= 0) {
        lineCb(buffer.slice(0, nl + 1));
        buffer = buffer.slice(nl + 1);
      }
    };
    ws.onclose = () => closeCb();
  });
}
