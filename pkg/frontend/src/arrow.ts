// Arrow geometry. The server sends an absolute bearing to the goal (0 = true
// north, clockwise); the device compass gives the direction the phone faces.
// The on-screen arrow is the difference, so "up" always means "walk forward".

export function renderArrow(bearingDeg: number, headingDeg: number): number {
  const a = (bearingDeg - headingDeg) % 360;
  return a < 0 ? a + 360 : a;
}

const POINTS = [
  "N", "NNE", "NE", "ENE", "E", "ESE", "SE", "SSE",
  "S", "SSW", "SW", "WSW", "W", "WNW", "NW", "NNW",
];

// Compass-rose fallback when there is no heading (denied permission or no
// magnetometer): tell the operator the absolute direction instead.
export function compassPoint(bearingDeg: number): string {
  const idx = Math.round((((bearingDeg % 360) + 360) % 360) / 22.5) % 16;
  return POINTS[idx];
}

export function describeTurn(arrowDeg: number): string {
  if (arrowDeg < 20 || arrowDeg > 340) return "straight ahead";
  if (arrowDeg < 160) return "turn right";
  if (arrowDeg <= 200) return "behind you";
  return "turn left";
}

// Equirectangular distance, same small-field approximation the server uses.
const EARTH_R = 6371000;

export function distanceMeters(
  lat1: number, lon1: number, lat2: number, lon2: number,
): number {
  const rad = Math.PI / 180;
  const x = (lon2 - lon1) * rad * Math.cos(((lat1 + lat2) / 2) * rad);
  const y = (lat2 - lat1) * rad;
  return Math.hypot(x, y) * EARTH_R;
}
