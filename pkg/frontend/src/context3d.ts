import * as THREE from 'three';
import { MatchedContext } from './types';

/**
 * Lightweight slice-in-context rendering: the volume as a wireframe box with
 * translucent orthogonal mid-planes, and the matched slice drawn as a
 * textured plane at its recovered position. Deliberately not a volume
 * raycaster; the plane's position inside the box is the information shown.
 */
export function createContextView(
  container: HTMLElement,
  ctx: MatchedContext,
  thumbnailB64: string
): void {
  const width = container.clientWidth || 480;
  const height = 360;
  const [nx = 1, ny = 1, nz = 1] = ctx.dims;
  const longest = Math.max(nx, ny, nz);
  // normalized box extents so any volume fits the same camera framing
  const ex = nx / longest;
  const ey = ny / longest;
  const ez = nz / longest;

  const scene = new THREE.Scene();
  scene.background = new THREE.Color(0x111418);

  const box = new THREE.BoxGeometry(ex, ey, ez);
  scene.add(
    new THREE.LineSegments(
      new THREE.EdgesGeometry(box),
      new THREE.LineBasicMaterial({ color: 0x5588cc })
    )
  );

  const planeMaterial = new THREE.MeshBasicMaterial({
    color: 0x334455,
    transparent: true,
    opacity: 0.15,
    side: THREE.DoubleSide,
  });
  const midX = new THREE.Mesh(new THREE.PlaneGeometry(ez, ey), planeMaterial);
  midX.rotation.y = Math.PI / 2;
  const midY = new THREE.Mesh(new THREE.PlaneGeometry(ex, ez), planeMaterial);
  midY.rotation.x = Math.PI / 2;
  const midZ = new THREE.Mesh(new THREE.PlaneGeometry(ex, ey), planeMaterial);
  scene.add(midX, midY, midZ);

  // the matched plane, textured with the matched slice thumbnail
  const matchedMaterial = new THREE.MeshBasicMaterial({
    side: THREE.DoubleSide,
    transparent: true,
    opacity: 0.95,
  });
  if (thumbnailB64) {
    new THREE.TextureLoader().load(
      'data:image/png;base64,' + thumbnailB64,
      (texture) => {
        matchedMaterial.map = texture;
        matchedMaterial.needsUpdate = true;
      }
    );
  } else {
    matchedMaterial.color = new THREE.Color(0xffaa33);
    matchedMaterial.opacity = 0.5;
  }

  let matched: THREE.Mesh;
  const axis = ctx.axis.toUpperCase();
  if (axis === 'X') {
    matched = new THREE.Mesh(new THREE.PlaneGeometry(ez, ey), matchedMaterial);
    matched.rotation.y = Math.PI / 2;
    matched.position.x = (ctx.slice_index / Math.max(1, nx - 1) - 0.5) * ex;
  } else if (axis === 'Y') {
    matched = new THREE.Mesh(new THREE.PlaneGeometry(ex, ez), matchedMaterial);
    matched.rotation.x = Math.PI / 2;
    matched.position.y = (ctx.slice_index / Math.max(1, ny - 1) - 0.5) * ey;
  } else {
    matched = new THREE.Mesh(new THREE.PlaneGeometry(ex, ey), matchedMaterial);
    matched.position.z = (ctx.slice_index / Math.max(1, nz - 1) - 0.5) * ez;
  }
  scene.add(matched);

  const camera = new THREE.PerspectiveCamera(40, width / height, 0.01, 10);
  camera.position.set(1.4, 1.1, 1.6);
  camera.lookAt(0, 0, 0);

  const renderer = new THREE.WebGLRenderer({ antialias: true });
  renderer.setSize(width, height);
  container.innerHTML = '';
  container.appendChild(renderer.domElement);

  const group = new THREE.Group();
  for (const child of [...scene.children]) group.add(child);
  scene.add(group);

  renderer.setAnimationLoop(() => {
    group.rotation.y += 0.004;
    renderer.render(scene, camera);
  });
}
