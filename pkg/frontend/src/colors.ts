/** Color language of the console.
 *
 * Point outlines follow the label state; fills follow a confidence heat
 * ramp where the least confident sample renders hottest, so the eye goes
 * straight to the points the run is about to ask about.
 */

export const STATE_COLORS: Record<string, string> = {
  seed: "#2563eb",
  oracle: "#7c3aed",
  pseudo: "#059669",
  unlabeled: "#9ca3af",
};

export function stateColor(state: string): string {
  return STATE_COLORS[state] ?? STATE_COLORS["unlabeled"]!;
}

/**
 * Map confidence in [0.5, 1] to heat in [0, 1].
 *
 * Confidence 1 is fully settled (heat 0); 0.5 is a coin flip between the
 * two nearest prototypes (heat 1). Monotone decreasing in between, and
 * clamped so out-of-range or non-finite inputs stay renderable.
 */
export function heatIntensity(confidence: number): number {
  if (!Number.isFinite(confidence)) return 0;
  const t = (1 - confidence) / 0.5;
  return Math.min(1, Math.max(0, t));
}

/** Cold-to-hot hue ramp over heatIntensity. */
export function confidenceHeat(confidence: number): string {
  const t = heatIntensity(confidence);
  const hue = Math.round(220 * (1 - t));
  return `hsl(${hue}, 85%, 55%)`;
}
