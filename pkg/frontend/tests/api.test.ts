import { describe, expect, it } from 'vitest';
import { ApiClient, ApiError, OfflineError } from '../src/api';
import { makeMockApi, offlineFetch, VOLUMES_FIXTURE } from './mockApi';

describe('ApiClient', () => {
  it('parses a volumes response', async () => {
    const { fetchFn } = makeMockApi();
    const api = new ApiClient('', fetchFn);
    const out = await api.volumes();
    expect(out.volumes.map((v) => v.id)).toEqual(['V1', 'V2', 'V3']);
    expect(out.species_totals['Ammonia tepida']).toBe(156);
  });

  it('maps error bodies to ApiError with code and hint', async () => {
    const { fetchFn } = makeMockApi({
      routes: {
        'POST /api/preprocess': () =>
          new Response(
            JSON.stringify({
              code: 'empty_foreground',
              message: 'no foreground at this sensitivity',
              hint: 'sensitivity too high',
            }),
            { status: 422 }
          ),
      },
    });
    const api = new ApiClient('', fetchFn);
    const err = await api.preprocess({ image_b64: 'AAAA' }).catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(422);
    expect(err.code).toBe('empty_foreground');
    expect(err.hint).toBe('sensitivity too high');
  });

  it('throws OfflineError when the network is down', async () => {
    const api = new ApiClient('', offlineFetch);
    await expect(api.volumes()).rejects.toBeInstanceOf(OfflineError);
  });

  it('rejects malformed response bodies', async () => {
    const { fetchFn } = makeMockApi({
      routes: {
        'GET /api/volumes': () =>
          new Response(JSON.stringify({ volumes: 'nope' }), { status: 200 }),
      },
    });
    const api = new ApiClient('', fetchFn);
    await expect(api.volumes()).rejects.toThrow();
  });

  it('returns null for a missing headline report', async () => {
    const { fetchFn } = makeMockApi();
    const api = new ApiClient('', fetchFn);
    expect(await api.headlineReport()).toBeNull();
  });

  it('sends request bodies as JSON', async () => {
    const { fetchFn, calls } = makeMockApi();
    const api = new ApiClient('', fetchFn);
    await api.startMatch({ upload_id: 'up-1', candidate_volume_ids: ['V2'] });
    const call = calls.find((c) => c.path === '/api/match');
    expect(call?.body).toEqual({ upload_id: 'up-1', candidate_volume_ids: ['V2'] });
  });

  it('echoes fixtures without recomputing anything', async () => {
    // every displayed number comes from the response verbatim
    const { fetchFn } = makeMockApi();
    const api = new ApiClient('', fetchFn);
    const out = await api.volumes();
    expect(out).toEqual(VOLUMES_FIXTURE);
  });
});
