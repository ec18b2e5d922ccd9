// Clinicians think in days; the wire speaks hours.  The conversion is done
// exactly once, at the API boundary, and always shown to the user.

export const HOURS_PER_DAY = 24;

export function daysToHours(days: number): number {
  return days * HOURS_PER_DAY;
}

export function hoursToDays(hours: number): number {
  return hours / HOURS_PER_DAY;
}

export function describeConversion(days: number): string {
  return `${days} d = ${daysToHours(days)} h`;
}
