// Cup indicator state. Operators routinely misread seal quality from
// geometry alone, so the icon encodes the difference between "pump is
// on" and "seal actually holds": green only when the server reports a
// seal, amber for an open valve that has not sealed (with the server's
// reason), grey when the valve is shut.

import { SuctionReport } from "./protocol.js";

export type IconColor = "green" | "amber" | "grey";

export interface SealIcon {
  color: IconColor;
  reason?: string; // only on amber: why the open cup is not sealed
  objectId?: string; // only on green: what the cup holds
}

export function sealIcon(report: SuctionReport): SealIcon {
  if (report.sealed) {
    return { color: "green", objectId: report.object_id ?? undefined };
  }
  if (report.valve_open) {
    return { color: "amber", reason: report.status };
  }
  return { color: "grey" };
}
