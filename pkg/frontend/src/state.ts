import { ClassifyResponse, CropRect, MatchStatus } from './types';

/**
 * Client session mirror of server state. Everything here originates from an
 * API response; the pages share it so a slice uploaded on the classification
 * page can be matched on the 3D page.
 */
export interface SessionState {
  uploadId: string | null;
  /** original upload as base64, kept so crop/sensitivity re-runs reuse it */
  originalB64: string | null;
  sensitivity: number;
  crop: CropRect | null;
  lastClassification: ClassifyResponse | null;
  selectedVolumeIds: Set<string>;
  activeJob: MatchStatus | null;
}

export function createSession(): SessionState {
  return {
    uploadId: null,
    originalB64: null,
    sensitivity: 0,
    crop: null,
    lastClassification: null,
    selectedVolumeIds: new Set(),
    activeJob: null,
  };
}
